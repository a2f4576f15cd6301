import sys

from imgcred.main import main

sys.exit(main())
