# topolog - Tests
