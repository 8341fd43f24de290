import sys

from ztlearn.main import main

sys.exit(main())
