"""Run `fosls-study` as `python -m fosls`."""

from .study import main

raise SystemExit(main())
