"""Invokes the console scripts for CLI."""

if __name__ == "__main__":
    from LABOToolkit.cli import app
    app()
