# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from sys import argv as sys_argv

def feeratelab_cli() -> int:
    from .feeratelab import main as cli_main
    return cli_main(sys_argv)
