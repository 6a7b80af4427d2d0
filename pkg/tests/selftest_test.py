from hpgn.selftest import InvariantSuite, run_selftest


class TestInvariantSuite:
    def test_counts_passes_and_failures(self):
        lines = []
        suite = InvariantSuite(echo=lines.append)
        assert suite.run_check("always", lambda: (True, "fine"))
        assert not suite.run_check("never", lambda: (False, "broken"))
        assert not suite.run_check("raises", lambda: 1 / 0)
        assert (suite.tests_run, suite.tests_passed) == (3, 1)
        assert lines[1] == "✅ Passed - fine"
        assert lines[-1].startswith("❌ Failed - Error:")

    def test_fast_checks_pass(self):
        suite = InvariantSuite(echo=lambda line: None)
        for check in (
            suite.check_qm_tables,
            suite.check_scale,
            suite.check_dct,
            suite.check_roundtrip,
            suite.check_priors,
            suite.check_identities,
            suite.check_metrics,
            suite.check_losses,
            suite.check_sampling,
            suite.check_checkpoint,
        ):
            ok, detail = check()
            assert ok, detail

    def test_full_run_reports_summary(self):
        lines = []
        assert run_selftest(lines.append)
        assert lines[-1].endswith("11/11 checks passed")
