"""HTTP gateway, durable job store, report schema, and CLI entry point."""

from .binder import UnsupportedHost, binder_link
from .jobs import JobService, JobState, JobStore, JobNotFinished, JobNotFound

__all__ = [
    "JobNotFinished",
    "JobNotFound",
    "JobService",
    "JobState",
    "JobStore",
    "UnsupportedHost",
    "binder_link",
]
