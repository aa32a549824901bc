"""Test suite for pecl-lab."""
