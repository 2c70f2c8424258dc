"""Expose the script-style `*_test.py` files to pytest.

Each test script is a standalone program (see utility/run_all.py); pytest runs
it the same way run_all does, as a subprocess in this directory with the repo
root on PYTHONPATH, and the item fails if the script exits non-zero.
"""

import os
import subprocess
import sys

import pytest

TESTS_DIR = os.path.dirname(os.path.realpath(__file__))
REPO_ROOT = os.path.dirname(TESTS_DIR)
RANDOM_SEED = 1


class ScriptFile(pytest.File):
    def collect(self):
        yield ScriptItem.from_parent(self, name=self.path.name)


class ScriptItem(pytest.Item):
    def runtest(self):
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(p for p in (REPO_ROOT, env.get("PYTHONPATH")) if p)
        proc = subprocess.run(
            [sys.executable, str(self.path), f"--randomseed={RANDOM_SEED}"],
            cwd=TESTS_DIR,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
        if proc.returncode != 0:
            raise ScriptFailure(proc.returncode, proc.stdout.decode("utf-8", "replace"))

    def repr_failure(self, excinfo):
        if isinstance(excinfo.value, ScriptFailure):
            code, output = excinfo.value.args
            return "%s exited with %d\n%s" % (self.path.name, code, output)
        return super().repr_failure(excinfo)

    def reportinfo(self):
        return self.path, None, self.path.name


class ScriptFailure(Exception):
    pass


def pytest_pycollect_makemodule(module_path, parent):
    if module_path.name.endswith("_test.py") and module_path.parent == parent.path:
        return ScriptFile.from_parent(parent, path=module_path)
