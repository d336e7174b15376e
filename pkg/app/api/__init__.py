# API package for FastAPI routers