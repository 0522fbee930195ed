"""End-to-end tests for complete pipeline workflows."""