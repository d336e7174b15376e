#!/usr/bin/env python3
"""
Production server startup script for Long-Memory Regression Diagnostics.
No reload: the service manager is a per-process singleton.
"""

import uvicorn
from app.config import settings

if __name__ == "__main__":
    uvicorn.run(
        "app.main:app",
        host="0.0.0.0",
        port=8000,
        reload=False,
        log_level=settings.log_level.lower()
    )
