"""Lane-following simulator and autonomy stack for a mecanum robot towing a wheelchair."""

__version__ = "0.1.0"
