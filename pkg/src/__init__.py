"""perfsentinel: zero-positive performance regression diagnosis from hardware performance counter profiles."""
