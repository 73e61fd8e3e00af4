"""
Environment settings for the flashover toolkit
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE", "logs/flashover.log")  # empty string disables the file handler

# Output locations
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "output")
ASSESSMENT_LOG_DIR = os.getenv("ASSESSMENT_LOG_DIR", "logs")
