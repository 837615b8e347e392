import sys

from bundle_newton.app import main

sys.exit(main())
