import sys

from fusedmlp.cli import main

sys.exit(main())
