# Tests for klab
