# Core package for shared utilities
