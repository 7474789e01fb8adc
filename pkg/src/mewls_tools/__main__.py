if __name__ == "__main__":
    import sys

    from mewls_tools.cli import app

    sys.exit(app())
