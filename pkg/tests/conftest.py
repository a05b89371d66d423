pytest_plugins = ["pytester", "sandpile_odometer.plugin"]
