"""Static CI gate for dbt-style SQL analytics repositories."""

__version__ = "0.1.0"
