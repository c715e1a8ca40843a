#!/usr/bin/python3

if __name__ == "__main__":
    from . import cli

    cli.run()
