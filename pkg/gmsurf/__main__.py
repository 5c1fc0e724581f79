"""Точка входа для запуска мешера через python -m gmsurf"""
from gmsurf.main import main

if __name__ == "__main__":
    main()
