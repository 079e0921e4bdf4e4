import os

from setuptools import setup

base_path = os.path.dirname (__file__)

with open (os.path.join (base_path, "VERSION")) as version:
  VERSION = version.read().rstrip ()
with open (os.path.join (base_path, "scanlab/_version.py"), "w") as vfile:
  vfile.write ('__version__ = "%s"\n' % VERSION)
with open (os.path.join (base_path, "requirements.txt")) as reqs:
  requirements = reqs.read ()

setup (
  name = "scanlab",
  version = VERSION,
  description = "Simulated gamma-probe scan demonstrations and a behavior-cloning policy",
  license = "GPLv3",
  packages = ["scanlab", "scanlab.backends"],
  package_dir = {"scanlab": "scanlab"},
  python_requires = ">=3.11",
  tests_require = ["pytest"],
  test_suite = "tests",
  install_requires = requirements,
  entry_points = {
    "console_scripts": ["scanlab = scanlab.cli:main"],
  },
  zip_safe = False,
)
