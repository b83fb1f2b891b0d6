"""Walk through the tunnel codec: build, inspect, classify.

Run: python demos/01_gtp_codec.py
"""

from megw import gtp
from megw.gtp import (Direction, GtpMessageType, GtpuPacket, build_ipv4,
                      build_tcpish, classify, decode_gtpu, encode_gtpu,
                      inner_five_tuple)

# A subscriber at 172.16.0.2 talks to the edge service VIP 10.100.1.1.
# The base station wraps the inner packet in the S1 tunnel format:
# outer IPv4 + UDP (port 2152) + an 8-byte tunnel header + inner bytes.
inner = build_ipv4("172.16.0.2", "10.100.1.1", 6,
                   build_tcpish(6, 5000, 80, b"GET /"))
pkt = GtpuPacket(outer_src="10.1.0.1", outer_dst="10.2.0.1",
                 teid=0x11223344, message_type=GtpMessageType.GPDU,
                 inner=inner)
wire = encode_gtpu(pkt)

print("wire bytes:", wire.hex())
print("tunnel header:", wire[28:36].hex(),
      "(flags 30, type ff, length, teid)")

decoded = decode_gtpu(wire)
assert decoded == pkt
print("round trip ok, teid =", hex(decoded.teid))

flow = inner_five_tuple(decoded.inner)
print("inner flow:", flow)

# The pipeline classifies frames by protocol and arrival side.
print("from RAN :", classify(wire, Direction.FROM_RAN).value)
print("from core:", classify(wire, Direction.FROM_CORE).value)

# End markers close a tunnel during handover: message type 254, no payload.
marker = encode_gtpu(GtpuPacket("10.2.0.1", "10.1.0.1", 0xC8,
                                GtpMessageType.END_MARKER))
print("end-marker type byte:", marker[29], "classified:",
      classify(marker, Direction.FROM_CORE).value)

# Control-plane frames ride SCTP and are recognized by protocol number.
control = build_ipv4("10.2.0.1", "10.1.0.1", 132, b"\x00" * 8)
print("SCTP frame:", classify(control, Direction.FROM_CORE).value)
