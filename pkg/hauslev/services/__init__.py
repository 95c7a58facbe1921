"""Core computations and the service used by the HTTP routers"""
