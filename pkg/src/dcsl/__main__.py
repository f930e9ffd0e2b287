import sys

from dcsl.cli import main

sys.exit(main())
