#!/usr/bin/env python
"""
Entry point for the sameday project.

Besides Django's own commands it exposes the experiment commands
gen, tune, train, eval, analyze and curves from the dispatch app.
"""

import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Django is not importable; run through `uv run python manage.py ...`"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
