#!/usr/bin/env python
"""Entry point script for running gevgp without installation."""

if __name__ == "__main__":
    from gevgp.cli import main
    main()
