import sys
from panelbreak.cli import main

if __name__ == "__main__":
    sys.argv[0] = "panelbreak"
    sys.exit(main())
