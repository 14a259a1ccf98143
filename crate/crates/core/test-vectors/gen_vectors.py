"""Writes the golden packet vectors in this directory.

Built directly from the wire format with struct packing, so the vectors do
not depend on the Rust encoder. Run from this directory.
"""
import ipaddress
import struct


def a(s):
    return ipaddress.IPv6Address(s).packed


def csum(data):
    if len(data) % 2:
        data += b"\0"
    s = sum(struct.unpack("!%dH" % (len(data) // 2), data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    c = ~s & 0xFFFF
    return c or 0xFFFF


def udp(src, final_dst, sport, dport, payload):
    length = 8 + len(payload)
    pseudo = a(src) + a(final_dst) + struct.pack("!I3xB", length, 17)
    c = csum(pseudo + struct.pack("!HHHH", sport, dport, length, 0) + payload)
    return struct.pack("!HHHH", sport, dport, length, c) + payload


def ipv6(src, dst, nh, payload, hop_limit=64, tc=0, flow=0):
    word = (6 << 28) | (tc << 20) | flow
    return struct.pack("!IHBB", word, len(payload), nh, hop_limit) + a(src) + a(dst) + payload


def srh(nh, path, segments_left=None, tag=0, flags=0, tlvs=b"", routing_type=4, last_entry=None):
    segs = [a(s) for s in reversed(path)]
    if segments_left is None:
        segments_left = len(segs) - 1
    if last_entry is None:
        last_entry = len(segs) - 1
    body = b"".join(segs) + tlvs
    assert (8 + len(body)) % 8 == 0
    hdr_ext_len = (8 + len(body)) // 8 - 1
    return struct.pack("!BBBBBBH", nh, hdr_ext_len, routing_type, segments_left, last_entry, flags, tag) + body


def dump(name, comment, data):
    with open(name, "w") as f:
        for line in comment:
            f.write("# %s\n" % line)
        for i in range(0, len(data), 16):
            f.write("%04x: %s\n" % (i, " ".join("%02x" % b for b in data[i:i + 16])))


dm_tlvs = (
    struct.pack("!BBQ", 1, 8, 15_000_000)
    + struct.pack("!BB", 2, 18) + a("fc00:3::1") + struct.pack("!H", 9999)
    + bytes([4, 0])
)

vectors = {}
vectors["udp_plain.hex"] = (
    ["expect: ok", "dst: fc00::2", "segments_left: none"],
    ipv6("fc00::1", "fc00::2", 17, udp("fc00::1", "fc00::2", 40000, 9, b"hello srv6"), flow=0x12345),
)
vectors["srh_two_segments.hex"] = (
    ["expect: ok", "dst: fc00:2::100", "segments_left: 1"],
    ipv6("fc00:1::1", "fc00:2::100", 43,
         srh(17, ["fc00:2::100", "fc00:3::1"], tag=7)
         + udp("fc00:1::1", "fc00:3::1", 1234, 5678, bytes(range(16)))),
)
vectors["srh_dm_tlvs.hex"] = (
    ["expect: ok", "dst: fc00:3::d", "segments_left: 1"],
    ipv6("fc00:2::1", "fc00:3::d", 43,
         srh(17, ["fc00:3::d", "fc00:3::1"], tag=1, tlvs=dm_tlvs)
         + udp("fc00:2::1", "fc00:3::1", 40000, 9, b"\xab" * 12)),
)
inner = ipv6("fc00:1::1", "fc00:3::1", 17, udp("fc00:1::1", "fc00:3::1", 40000, 9, b"\x01" * 20), hop_limit=63)
vectors["encapsulated.hex"] = (
    ["expect: ok", "dst: fc00:3::d", "segments_left: 1"],
    ipv6("fc00:2::1", "fc00:3::d", 43, srh(41, ["fc00:3::d", "fc00:3::1"]) + inner),
)
vectors["stacked_srh.hex"] = (
    ["expect: ok", "dst: fc00:5::1", "segments_left: 0"],
    ipv6("fc00:1::1", "fc00:5::1", 43,
         srh(43, ["fc00:5::1"]) + srh(17, ["fc00:6::1", "fc00:7::1"], segments_left=1)
         + udp("fc00:1::1", "fc00:7::1", 7, 7, b"xy")),
)
good = vectors["srh_two_segments.hex"][1]
vectors["bad_routing_type.hex"] = (
    ["expect: error bad_routing_type", "offset: 42"],
    good[:42] + bytes([2]) + good[43:],
)
vectors["truncated.hex"] = (
    ["expect: error inconsistent_length", "offset: 4"],
    good[:-5],
)
vectors["segments_left_out_of_range.hex"] = (
    ["expect: error invalid_srh", "offset: 40"],
    good[:43] + bytes([5]) + good[44:],
)
vectors["pad1_run.hex"] = (
    ["expect: error invalid_srh", "offset: 40"],
    ipv6("fc00:1::1", "fc00:2::1", 43,
         srh(17, ["fc00:2::1"], segments_left=0, tlvs=bytes(8))
         + udp("fc00:1::1", "fc00:2::1", 1, 2, b"")),
)

for name, (comment, data) in vectors.items():
    dump(name, comment, data)
