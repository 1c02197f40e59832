#!/usr/bin/env python3
"""
mvoprobit - Main Entry Point
Multivariate ordered probit estimation from the command line

Commands:
- simulate: synthetic datasets from known parameters
- fit: full-information maximum likelihood with standard errors
- predict / contour: stage probabilities and adoption grids
- stage / sei: survey staging and multimodality indices
- mvnprob: a single normal rectangle probability
"""

import sys
from pathlib import Path

# Add repository root to Python path
sys.path.insert(0, str(Path(__file__).parent))


def main():
    """Main application entry point"""
    try:
        from src.app import main as run
    except ImportError as e:
        print(f"❌ Import error: {e}")
        print("Make sure all required packages are installed:")
        print("pip install -r requirements.txt")
        sys.exit(1)
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        print("\n👋 Interrupted")
        sys.exit(130)


if __name__ == "__main__":
    main()
