def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale convergence studies (tens of seconds)")
