import os

# Env var capping worker threads across all stages.
THREADS_ENV = "SLS_THREADS"


def thread_count(default=1):
    """Number of worker threads to use, capped by the SLS_THREADS env var."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)


def parse_resolution(text):
    """Parse a WxH string like '1024x768' into an (int, int) tuple."""
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"resolution must look like WxH, got {text!r}")
    return int(parts[0]), int(parts[1])
