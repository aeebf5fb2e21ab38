#!/usr/bin/env python3
"""
命令行入口：python run.py table-forward / table-inverse / schur-check / rates
"""
from src.cli import main

if __name__ == "__main__":
    main()
