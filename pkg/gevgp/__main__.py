"""Allow running gevgp with python -m gevgp."""

from .cli import main

if __name__ == "__main__":
    main()
