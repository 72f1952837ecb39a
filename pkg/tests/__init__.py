"""Test suite for the CACRL scheduler."""
