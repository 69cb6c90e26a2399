"""Channel-state duality, CPTP parameterizations and channel families."""
