"""Service layer for configuration, sampling orchestration and result output."""
