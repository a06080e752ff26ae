import sys

from adasecant.main import main

sys.exit(main())
