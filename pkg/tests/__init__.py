"""Tests package for Prompt Ops Hub."""
