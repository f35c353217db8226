"""Archived certificates must keep verifying against their systems.

These files were produced by the certification pipeline and are committed
as regression anchors: they must round-trip bit-exactly through the
serializer and still satisfy every recomputed block inequality.
"""

import pathlib

from smjls.analysis import decay_constants
from smjls.lmi import certificate_to_json, load_certificate, verify_certificate

DATA = pathlib.Path(__file__).parent / "data"


def test_archived_brl_certificate_still_verifies(contractive_system):
    path = DATA / "two_mode_contractive.brl_w1.cert.json"
    cert = load_certificate(path)
    assert cert.kind == "brl"
    assert cert.M == 1
    report = verify_certificate(contractive_system, cert)
    assert report.ok
    assert report.max_block_eig <= -cert.margin / 2
    # byte-exact round trip through the serializer
    assert certificate_to_json(cert) == path.read_text()


def test_archived_stability_certificate_constants(graph_system):
    path = DATA / "graph_constrained.stability_w1.cert.json"
    cert = load_certificate(path)
    report = verify_certificate(graph_system, cert)
    assert report.ok
    c, lam = decay_constants(cert)
    assert c >= 1.0
    assert 0.0 < lam < 1.0
    # stored derived constants agree with the recomputed margins
    import json

    doc = json.loads(path.read_text())
    assert doc["c"] == c
    assert doc["lambda"] == lam
