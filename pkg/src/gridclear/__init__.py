"""Day-ahead market clearing, redispatch and non-convex pricing on DC networks."""
