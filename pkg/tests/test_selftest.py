from mol2adr import autodiff as ad
from mol2adr.selftest import run_selftest


def test_every_check_passes():
    ad.set_float_width(32)
    results = run_selftest()
    failed = [(r.name, r.detail) for r in results if not r.passed]
    assert failed == []
    assert len(results) > 15
    assert ad.float_width() == 32
