import sys
import asyncio
from app.main import main

if __name__ == '__main__':
    sys.exit(asyncio.run(main()))
