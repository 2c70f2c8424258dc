import argparse
from enum import Enum
import logging
import os
import pdb
import random
import shutil
import subprocess
import sys
import tempfile
import time
import traceback
from pathlib import Path

import rtoml

from test_framework import REPO_ROOT
from capskin.geometry import save_mesh
from capskin.meshgen import semicone

__file_path__ = os.path.dirname(os.path.realpath(__file__))

TESTS_DIR = os.path.dirname(__file_path__)
FIXTURE_MANIFEST = os.path.join(TESTS_DIR, "fixtures", "semicone.manifest.toml")
GOLDEN_FILE = os.path.join(TESTS_DIR, "config", "golden.toml")


class TestStatus(Enum):
    PASSED = 1
    FAILED = 2


TEST_EXIT_PASSED = 0
TEST_EXIT_FAILED = 1


def load_fixture_manifest(path=FIXTURE_MANIFEST):
    with open(path, "r", encoding="utf-8") as f:
        return rtoml.load(f)


class TestFramework:
    def __init__(self):
        self.root_dir = None
        self.random_seed = 0
        self.manifest = load_fixture_manifest()
        self._fixture_mesh = None
        self._fixture_mesh_path = None
        self.golden_file = GOLDEN_FILE

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument(
            "-l",
            "--loglevel",
            dest="loglevel",
            default="INFO",
            help="log events at this level and higher to the console. Can be set to DEBUG, INFO, WARNING, ERROR or CRITICAL. Passing --loglevel DEBUG will output all logs to console. Note that logs at all levels are always written to the test_framework.log file in the temporary test directory.",
        )

        parser.add_argument(
            "--tmpdir", dest="tmpdir", help="Root directory for datadirs"
        )

        parser.add_argument(
            "--devdir", dest="devdir", help="A softlink point to the last run"
        )

        parser.add_argument(
            "--randomseed", dest="random_seed", type=int, help="Set a random seed"
        )

        parser.add_argument(
            "--pdbonfailure",
            dest="pdbonfailure",
            default=False,
            action="store_true",
            help="Attach a python debugger if test fails",
        )

        parser.add_argument(
            "--record-golden",
            dest="record_golden",
            default=False,
            action="store_true",
            help="Write missing golden entries to tests/config/golden.toml instead of leaving them unpinned",
        )

    def __start_logging(self):
        # Add logger and logging handlers
        self.log = logging.getLogger("TestFramework")
        self.log.setLevel(logging.DEBUG)

        # Create file handler to log all messages
        fh = logging.FileHandler(
            self.options.tmpdir + "/test_framework.log", encoding="utf-8"
        )
        fh.setLevel(logging.DEBUG)

        # Console handler level comes from --loglevel, given as a name or a number
        ch = logging.StreamHandler(sys.stdout)
        ll = (
            int(self.options.loglevel)
            if self.options.loglevel.isdigit()
            else self.options.loglevel.upper()
        )
        ch.setLevel(ll)

        formatter = logging.Formatter(
            fmt="%(asctime)s.%(msecs)03d000Z %(name)s (%(levelname)s): %(message)s",
            datefmt="%Y-%m-%dT%H:%M:%S",
        )
        formatter.converter = time.gmtime
        fh.setFormatter(formatter)
        ch.setFormatter(formatter)

        self.log.addHandler(fh)
        self.log.addHandler(ch)

        # library events go to the same file
        lib = logging.getLogger("capskin")
        lib.setLevel(logging.DEBUG)
        lib.addHandler(fh)

    def fixture_mesh(self):
        """The semicone fixture described by tests/fixtures/semicone.manifest.toml."""
        if self._fixture_mesh is None:
            m = self.manifest
            self._fixture_mesh = semicone(
                tuple(m["dims_mm"]), m["theta_steps"], m["slant_steps"], m["top_ratio"]
            )
        return self._fixture_mesh

    def fixture_mesh_path(self):
        if self._fixture_mesh_path is None:
            self._fixture_mesh_path = os.path.join(self.root_dir, "semicone.obj")
            save_mesh(self.fixture_mesh(), self._fixture_mesh_path, header="test fixture")
        return self._fixture_mesh_path

    def _run_cli(self, cli_args, expected_code=0, timeout=1200):
        """Run `python -m capskin` in the test directory; returns its stdout lines."""
        args = [sys.executable, "-m", "capskin"] + [str(a) for a in cli_args]
        self.log.info("run cli: {}".format(args))

        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(p for p in (REPO_ROOT, env.get("PYTHONPATH")) if p)

        stdout = tempfile.NamedTemporaryFile(dir=self.root_dir, delete=False, prefix="capskin_stdout_")
        stderr = tempfile.NamedTemporaryFile(dir=self.root_dir, delete=False, prefix="capskin_stderr_")
        try:
            proc = subprocess.Popen(
                args,
                text=True,
                cwd=self.root_dir,
                env=env,
                stdout=stdout.fileno(),
                stderr=stderr.fileno(),
            )
            return_code = proc.wait(timeout=timeout)

            stdout.seek(0)
            lines = [line.decode("utf-8").rstrip("\n") for line in stdout.readlines()]
            stderr.seek(0)
            errors = stderr.read().decode("utf-8")
        except Exception as ex:
            self.log.error("Failed to run CLI, output: %s", stdout.name)
            raise ex
        finally:
            stdout.close()
            stderr.close()

        for line in lines:
            self.log.debug("stdout: %s", line)
        assert return_code == expected_code, "%s exited %d, expected %d, stderr: %s" % (
            cli_args[:1], return_code, expected_code, errors
        )
        return lines

    def check_golden(self, key, value, rel=None):
        """Compare `value` with the pinned entry of the golden file.

        With `rel`, numbers (or lists of numbers) match within that relative tolerance.
        An entry is written only under --record-golden; otherwise a missing entry is
        reported and left unpinned. Returns whether a pinned value was checked.
        """
        golden = self.__load_golden()
        if key not in golden:
            if not self.options.record_golden:
                self.log.warning(
                    "No golden entry %r in %s (got %r); run this test alone with --record-golden to pin it",
                    key, self.golden_file, value,
                )
                return False
            golden[key] = value
            tmp = self.golden_file + ".tmp"
            with open(tmp, "w", encoding="utf-8") as f:
                rtoml.dump(golden, f)
            os.replace(tmp, self.golden_file)
            self.log.info("Pinned golden entry %r = %r", key, value)
            return True
        recorded = golden[key]
        if rel is None:
            matches = recorded == value
        else:
            a = recorded if isinstance(recorded, list) else [recorded]
            b = value if isinstance(value, list) else [value]
            matches = len(a) == len(b) and all(abs(x - y) <= rel * max(abs(x), abs(y)) for x, y in zip(a, b))
        assert matches, "golden %r mismatch: recorded %r, got %r" % (key, recorded, value)
        return True

    def __load_golden(self):
        if not os.path.exists(self.golden_file):
            return {}
        with open(self.golden_file, "r", encoding="utf-8") as f:
            return rtoml.load(f)

    def setup_params(self):
        pass

    def run_test(self):
        raise NotImplementedError

    def main(self):
        parser = argparse.ArgumentParser(usage="%(prog)s [options]")
        self.add_arguments(parser)
        self.options = parser.parse_args()

        # Set up temp directory and start logging
        if self.options.tmpdir:
            self.options.tmpdir = os.path.abspath(self.options.tmpdir)
            os.makedirs(self.options.tmpdir, exist_ok=True)
        else:
            self.options.tmpdir = os.getenv(
                "CAPSKIN_TESTS_LOG_DIR", default=tempfile.mkdtemp(prefix="capskin_test_")
            )

        self.root_dir = self.options.tmpdir

        self.__start_logging()
        self.log.info("Root dir: %s", self.root_dir)

        if self.options.devdir:
            dst = self.options.devdir

            if os.path.islink(dst):
                os.remove(dst)
            elif os.path.isdir(dst):
                shutil.rmtree(dst)
            elif os.path.exists(dst):
                os.remove(dst)

            os.symlink(self.options.tmpdir, dst)
            self.log.info("Symlink: %s", Path(dst).absolute())

        if self.options.random_seed is not None:
            self.random_seed = self.options.random_seed
        random.seed(self.random_seed)

        success = TestStatus.FAILED
        try:
            self.setup_params()
            self.log.debug("========== start to run tests ==========")
            self.run_test()
            success = TestStatus.PASSED
        except AssertionError as e:
            self.log.exception("Assertion failed %s", repr(e))
        except KeyboardInterrupt as e:
            self.log.warning("Exiting after keyboard interrupt %s", repr(e))
        except Exception as e:
            self.log.error("Test exception %s %s", repr(e), traceback.format_exc())
            self.log.error(f"Test data are not deleted: {self.root_dir}")

        if success == TestStatus.FAILED and self.options.pdbonfailure:
            print("Testcase failed. Attaching python debugger. Enter ? for help")
            pdb.set_trace()

        if success == TestStatus.PASSED:
            self.log.info("Tests successful")
            exit_code = TEST_EXIT_PASSED
        else:
            self.log.error(
                "Test failed. Test logging available at %s/test_framework.log",
                self.options.tmpdir,
            )
            exit_code = TEST_EXIT_FAILED

        for name in ("TestFramework", "capskin"):
            log = logging.getLogger(name)
            for handler in log.handlers[:]:
                log.removeHandler(handler)
                handler.close()
        logging.shutdown()

        if success == TestStatus.PASSED:
            shutil.rmtree(self.root_dir)

        sys.exit(exit_code)
