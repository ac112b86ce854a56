#!/usr/bin/env python
import sys

from tools.dtcook_cli import DtcookCli

""" wrapper for running DtcookCli """
if __name__ == '__main__':
    cmd = DtcookCli()
    sys.exit(cmd.run())
