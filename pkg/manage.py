#!/usr/bin/env python
"""GMV 추정기 명령행 도구"""
import sys


def main():
    """명령 실행"""
    from cli.main import main as run
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
