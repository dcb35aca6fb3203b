"""Source package for Prompt Ops Hub."""
