"""In-process virtual fabric for end-to-end gateway scenarios.

Builds a topology of simulated nodes (subscribers, base stations, an
EPC stub, gateways, echo servers) connected by zero-loss in-order links,
and replays attach, edge-request, and X2 handover sequences over it.
Frames are real wire bytes; every gateway hop runs the actual steering
pipeline and control-plane processor, so traces reflect exactly what the
data plane would do.

Execution is a single-threaded discrete-event loop over a logical clock:
deterministic given (config, script, seed).
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field, asdict

from . import control, gtp, s1ap, steering
from .control import (InstallRule, MigrationNotice, ReactivateUe,
                      ReleaseUeRules, S1apProcessor, SilenceUe, TopologyView)
from .gtp import Direction, GtpMessageType, GtpuPacket
from .s1ap import BearerItem, MessageKind, S1apLiteMessage
from .steering import (CloneToController, DipAffinityTable, Drop, Emit,
                       EndMarkerSeen, FlowMiss, Multiple, RuleStore,
                       S1apClone, SteeringConfig)


class ConfigError(ValueError):
    """Topology document fails referential integrity checks."""


class StateError(RuntimeError):
    """A scripted operation was attempted from the wrong state."""


# trace actions
SENT = "Sent"
RECEIVED = "Received"
DROPPED = "Dropped"
CLONED = "Cloned"
RULE_INSTALLED = "RuleInstalled"
SILENCED = "Silenced"
REACTIVATED = "Reactivated"
MIGRATION_NOTIFIED = "MigrationNotified"


@dataclass(frozen=True)
class TraceEvent:
    step: int
    node: str
    action: str
    detail: dict


@dataclass
class NodeSpec:
    kind: str
    addr: str
    megw: str | None = None     # for DIPs: host gateway
    weight: float = 1.0


@dataclass
class Topology:
    nodes: dict
    links: list                      # (a, b, latency)
    enb_to_megw: dict
    megw_to_region: dict
    vips: list
    steering_configs: dict           # megw_id -> SteeringConfig
    addr_to_node: dict
    neighbors: dict                  # node -> sorted adjacent nodes
    latency: dict                    # frozenset({a, b}) -> ticks
    next_hop: dict                   # (src, dst) -> neighbor

    def view(self) -> TopologyView:
        enb_addr_to_megw = {self.nodes[e].addr: m
                            for e, m in self.enb_to_megw.items()}
        return TopologyView(enb_to_megw=enb_addr_to_megw,
                            megw_to_region=dict(self.megw_to_region))


def build_topology(config: dict) -> Topology:
    """Validate a topology document and precompute routing."""
    nodes: dict[str, NodeSpec] = {}
    for node_id, doc in config.get("nodes", {}).items():
        nodes[node_id] = NodeSpec(kind=doc["kind"], addr=doc["addr"],
                                  megw=doc.get("megw"),
                                  weight=float(doc.get("weight", 1.0)))

    def require(node_id, kinds, context):
        if node_id not in nodes:
            raise ConfigError(f"{context}: unknown node {node_id!r}")
        if nodes[node_id].kind not in kinds:
            raise ConfigError(
                f"{context}: {node_id!r} is a {nodes[node_id].kind}, "
                f"expected one of {kinds}")

    enb_to_megw = dict(config.get("enb_to_megw", {}))
    megw_to_region = dict(config.get("megw_to_region", {}))
    vips = list(config.get("vips", []))
    if not vips:
        raise ConfigError("at least one VIP is required")

    megws = [n for n, s in nodes.items() if s.kind == "megw"]
    for enb, megw in enb_to_megw.items():
        require(enb, {"enb"}, "enb_to_megw")
        require(megw, {"megw"}, "enb_to_megw")
    for node_id, spec in nodes.items():
        if spec.kind == "enb" and node_id not in enb_to_megw:
            raise ConfigError(f"eNB {node_id!r} has no gateway mapping")
        if spec.kind == "dip":
            if spec.megw is None:
                raise ConfigError(f"DIP {node_id!r} has no host gateway")
            require(spec.megw, {"megw"}, f"DIP {node_id!r}")
    for megw in megws:
        if megw not in megw_to_region:
            raise ConfigError(f"gateway {megw!r} has no region")
    for megw in megw_to_region:
        require(megw, {"megw"}, "megw_to_region")

    addrs: dict[str, str] = {}
    for node_id, spec in nodes.items():
        if spec.addr in addrs:
            raise ConfigError(
                f"address {spec.addr} reused by {node_id!r} and "
                f"{addrs[spec.addr]!r}")
        addrs[spec.addr] = node_id

    links, latency = [], {}
    neighbors: dict[str, list] = {n: [] for n in nodes}
    for doc in config.get("links", []):
        a, b = doc["a"], doc["b"]
        require(a, {s.kind for s in nodes.values()}, "link")
        require(b, {s.kind for s in nodes.values()}, "link")
        ticks = int(doc.get("latency", 1))
        links.append((a, b, ticks))
        latency[frozenset((a, b))] = ticks
        neighbors[a].append(b)
        neighbors[b].append(a)
    neighbors = {n: sorted(set(peers)) for n, peers in neighbors.items()}

    sgws = [n for n, s in nodes.items() if s.kind == "sgw_mme"]
    if len(sgws) != 1:
        raise ConfigError(f"exactly one EPC stub required, found {sgws}")
    local_sgw = nodes[sgws[0]].addr

    # per-gateway steering view: region peers share a region, DIPs are local
    regions: dict[str, list] = {}
    for megw in sorted(megws):
        regions.setdefault(megw_to_region[megw], []).append(megw)
    steering_configs = {}
    for megw in megws:
        peers = tuple((m, nodes[m].addr, nodes[m].weight)
                      for m in regions[megw_to_region[megw]])
        dips = tuple((s.addr, s.weight) for n, s in sorted(nodes.items())
                     if s.kind == "dip" and s.megw == megw)
        steering_configs[megw] = SteeringConfig(
            megw_id=megw, vips=frozenset(vips), region_peers=peers,
            dips=dips, local_sgw=local_sgw)

    # shortest-path next hops; ties broken by sorted neighbor order
    next_hop = {}
    for src in nodes:
        frontier = [src]
        parent = {src: None}
        while frontier:
            nxt = []
            for u in frontier:
                for v in neighbors[u]:
                    if v not in parent:
                        parent[v] = u
                        nxt.append(v)
            frontier = nxt
        for dst in parent:
            if dst == src:
                continue
            hop = dst
            while parent[hop] != src:
                hop = parent[hop]
            next_hop[(src, dst)] = hop

    return Topology(nodes=nodes, links=links, enb_to_megw=enb_to_megw,
                    megw_to_region=megw_to_region, vips=vips,
                    steering_configs=steering_configs, addr_to_node=addrs,
                    neighbors=neighbors, latency=latency, next_hop=next_hop)


@dataclass
class Bearer:
    bearer_id: int
    upstream_teid: int = 0
    downstream_teid: int = 0


@dataclass
class UeRecord:
    node_id: str
    addr: str
    radio_enb: str | None = None    # where the radio currently is
    route_enb: str | None = None    # where the fabric still routes to
    bearers: dict = field(default_factory=dict)
    next_port: int = 40000
    last_flow: tuple | None = None  # (FiveTuple, bearer_id)


@dataclass
class MegwState:
    config: SteeringConfig
    rules: RuleStore
    affinity: DipAffinityTable
    processor: S1apProcessor


class Harness:
    """Event-driven fabric; the public run_* methods script the timelines."""

    MAX_EVENTS = 200_000

    def __init__(self, topology: Topology, seed: int = 0):
        self.topology = topology
        self.seed = seed
        self.trace: list[TraceEvent] = []
        self._step = itertools.count()
        self._queue: list = []
        self._qseq = itertools.count()
        self.clock = 0
        base = (seed & 0xFF) << 16
        self._up_teids = itertools.count(0x1000 + base)
        self._down_teids = itertools.count(0x2000 + base)
        self._ue_ids = itertools.count(1 + (seed & 0xFF))
        self.megws = {
            m: MegwState(config=cfg, rules=RuleStore(),
                         affinity=DipAffinityTable(),
                         processor=S1apProcessor(m, topology.view()))
            for m, cfg in topology.steering_configs.items()}
        self.ues = {n: UeRecord(node_id=n, addr=s.addr)
                    for n, s in topology.nodes.items() if s.kind == "ue"}
        self._sgw_node = next(n for n, s in topology.nodes.items()
                              if s.kind == "sgw_mme")

    # -- plumbing ------------------------------------------------------------

    def _record(self, node: str, action: str, detail: dict) -> None:
        self.trace.append(TraceEvent(step=next(self._step), node=node,
                                     action=action, detail=detail))

    def trace_jsonl(self, events=None) -> str:
        events = self.trace if events is None else events
        return "\n".join(
            json.dumps(asdict(e), sort_keys=True, default=control._json_default)
            for e in events)

    def _resolve(self, addr: str) -> str | None:
        node = self.topology.addr_to_node.get(addr)
        if node is None:
            return None
        spec = self.topology.nodes[node]
        if spec.kind == "ue":
            ue = self.ues[node]
            return ue.route_enb
        return node

    def _send(self, from_node: str, dst_addr: str, data: bytes,
              note: str = "") -> None:
        target = self._resolve(dst_addr)
        if target is None or target == from_node:
            self._record(from_node, DROPPED,
                         {"reason": "no-route", "dst": dst_addr})
            return
        hop = self.topology.next_hop.get((from_node, target))
        if hop is None:
            self._record(from_node, DROPPED,
                         {"reason": "unreachable", "dst": dst_addr})
            return
        self._record(from_node, SENT,
                     {"dst": dst_addr, "via": hop, "note": note,
                      "bytes": len(data)})
        ticks = self.topology.latency[frozenset((from_node, hop))]
        heapq.heappush(self._queue, (self.clock + ticks, next(self._qseq),
                                     hop, from_node, data, dst_addr))

    def run_until_idle(self) -> None:
        events = 0
        while self._queue:
            events += 1
            if events > self.MAX_EVENTS:
                raise RuntimeError("event budget exhausted: routing loop?")
            self.clock, _, node, sender, data, dst_addr = heapq.heappop(
                self._queue)
            self._deliver(node, sender, data, dst_addr)

    def _deliver(self, node: str, sender: str, data: bytes,
                 dst_addr: str) -> None:
        kind = self.topology.nodes[node].kind
        if kind == "megw":
            self._megw_frame(node, sender, data)
        elif kind == "enb":
            self._enb_frame(node, data)
        elif kind == "dip":
            self._dip_frame(node, data)
        elif kind == "sgw_mme":
            self._sgw_frame(node, data, dst_addr)
        else:
            self._record(node, DROPPED, {"reason": "not-a-forwarder"})

    # -- gateway -------------------------------------------------------------

    def _ingress_direction(self, megw: str, sender: str) -> Direction:
        kind = self.topology.nodes[sender].kind
        if kind == "enb":
            return Direction.FROM_RAN
        if kind == "sgw_mme":
            return Direction.FROM_CORE
        return Direction.FROM_CLUSTER

    def _megw_frame(self, megw: str, sender: str, data: bytes) -> None:
        state = self.megws[megw]
        ingress = self._ingress_direction(megw, sender)
        action = steering.process_packet(data, ingress, state.config,
                                         state.rules, state.affinity)
        self._apply_action(megw, state, action)

    def _apply_action(self, megw: str, state: MegwState, action) -> None:
        if isinstance(action, Multiple):
            for sub in action.actions:
                self._apply_action(megw, state, sub)
        elif isinstance(action, Emit):
            self._send(megw, action.dst, action.data, note=action.note)
        elif isinstance(action, Drop):
            self._record(megw, DROPPED, {"reason": action.reason})
        elif isinstance(action, CloneToController):
            self._handle_clone(megw, state, action.event)

    def _handle_clone(self, megw: str, state: MegwState, event) -> None:
        # the controller is local: its effects land before the next frame
        if isinstance(event, S1apClone):
            try:
                msg = s1ap.decode_message(event.payload)
            except s1ap.S1apDecodeError as exc:
                self._record(megw, CLONED, {"kind": "s1ap",
                                            "error": str(exc)})
                return
            self._record(megw, CLONED, {"kind": "s1ap",
                                        "message": msg.kind.name,
                                        "ue_ip": msg.ue_ip})
            effects = state.processor.on_control_message(msg)
        elif isinstance(event, EndMarkerSeen):
            self._record(megw, CLONED, {"kind": "end-marker",
                                        "teid": event.teid})
            effects = state.processor.on_end_marker(event.teid)
        elif isinstance(event, FlowMiss):
            self._record(megw, CLONED, {"kind": "flow-miss",
                                        "ue_ip": event.five_tuple.src_ip,
                                        "upstream_teid": event.upstream_teid})
            effects = state.processor.on_flow_miss(event.five_tuple,
                                                   event.upstream_teid)
        else:
            return
        self._apply_effects(megw, state, effects)

    def _apply_effects(self, megw: str, state: MegwState, effects) -> None:
        for eff in effects:
            if isinstance(eff, InstallRule):
                state.rules.install(eff.rule)
                self._record(megw, RULE_INSTALLED, {
                    "ue_ip": eff.rule.key.src_ip,
                    "flow": asdict(eff.rule.key),
                    "downstream_teid": eff.rule.downstream_teid})
            elif isinstance(eff, SilenceUe):
                n = state.rules.set_ue_silent(eff.ue_ip)
                self._record(megw, SILENCED, {"ue_ip": eff.ue_ip, "rules": n})
            elif isinstance(eff, ReactivateUe):
                n = state.rules.reactivate_ue(eff.ue_ip, dict(eff.teid_remap),
                                              eff.new_enb_addr)
                self._record(megw, REACTIVATED,
                             {"ue_ip": eff.ue_ip, "rules": n,
                              "new_enb": eff.new_enb_addr})
            elif isinstance(eff, MigrationNotice):
                self._record(megw, MIGRATION_NOTIFIED,
                             {"ue_ip": eff.ue_ip, "old_mec": eff.old_mec,
                              "new_mec": eff.new_mec})
            elif isinstance(eff, ReleaseUeRules):
                # tunnel state leaves with the subscriber; the processor log
                # keeps the record, the trace vocabulary has no event for it
                state.rules.release_ue(eff.ue_ip)
            # ScenarioDetected / Orphan / NoContext stay in the processor log

    # -- other nodes ----------------------------------------------------------

    def _enb_frame(self, enb: str, data: bytes) -> None:
        spec = self.topology.nodes[enb]
        try:
            view = gtp.parse_ipv4(data)
        except gtp.DecodeError:
            self._record(enb, DROPPED, {"reason": "unparseable"})
            return
        if view.dst != spec.addr:
            self._record(enb, DROPPED, {"reason": "not-addressed-here",
                                        "dst": view.dst})
            return
        if view.proto == gtp.PROTO_SCTP:
            self._record(enb, RECEIVED, {"kind": "control",
                                         "bytes": len(view.payload)})
            return
        try:
            pkt = gtp.decode_gtpu(data)
        except gtp.DecodeError:
            self._record(enb, DROPPED, {"reason": "untunneled"})
            return
        if pkt.message_type is GtpMessageType.END_MARKER:
            self._record(enb, RECEIVED, {"kind": "end-marker",
                                         "teid": pkt.teid})
            return
        self._radio_deliver(enb, pkt)

    def _radio_deliver(self, enb: str, pkt: GtpuPacket) -> None:
        for ue in self.ues.values():
            for bearer in ue.bearers.values():
                if bearer.downstream_teid == pkt.teid:
                    detail = {"teid": pkt.teid,
                              "bearer_id": bearer.bearer_id}
                    try:
                        view = gtp.parse_ipv4(pkt.inner)
                        body = (view.payload[4:] if view.proto in (6, 17)
                                else view.payload)
                        detail["flow_src"] = view.src
                        detail["payload"] = body.hex()
                    except gtp.DecodeError:
                        detail["payload"] = pkt.inner.hex()
                    if ue.radio_enb != enb:
                        # forwarding phase: relay over X2 to the new radio
                        self._record(enb, SENT,
                                     {"via": "x2-forwarding",
                                      "to": ue.radio_enb, "teid": pkt.teid})
                        detail["via"] = "x2-forwarding"
                    self._record(ue.node_id, RECEIVED, detail)
                    return
        self._record(enb, DROPPED, {"reason": "unknown-teid",
                                    "teid": pkt.teid})

    def _dip_frame(self, dip: str, data: bytes) -> None:
        spec = self.topology.nodes[dip]
        try:
            flow = gtp.inner_five_tuple(data)
        except gtp.DecodeError:
            self._record(dip, DROPPED, {"reason": "unparseable"})
            return
        if flow.dst_ip != spec.addr:
            self._record(dip, DROPPED, {"reason": "not-addressed-here"})
            return
        self._record(dip, RECEIVED, {"from": flow.src_ip,
                                     "dst_port": flow.dst_port})
        view = gtp.parse_ipv4(data)
        payload = view.payload[4:] if flow.proto in (6, 17) else view.payload
        reply = gtp.build_ipv4(
            spec.addr, flow.src_ip, flow.proto,
            gtp.build_tcpish(flow.proto, flow.dst_port, flow.src_port,
                             payload))
        self._send(dip, flow.src_ip, reply, note="echo")

    def _sgw_frame(self, sgw: str, data: bytes, dst_addr: str) -> None:
        spec = self.topology.nodes[sgw]
        try:
            view = gtp.parse_ipv4(data)
        except gtp.DecodeError:
            self._record(sgw, DROPPED, {"reason": "unparseable"})
            return
        if view.dst == spec.addr:
            kind = "control" if view.proto == gtp.PROTO_SCTP else "data"
            self._record(sgw, RECEIVED, {"kind": kind, "src": view.src})
            return
        # plain router behaviour for transit frames
        self._send(sgw, dst_addr, data, note="epc-transit")

    # -- scripted operations ---------------------------------------------------

    def _ue(self, ue_id: str) -> UeRecord:
        if ue_id not in self.ues:
            raise StateError(f"unknown subscriber {ue_id!r}")
        return self.ues[ue_id]

    def _control_frame(self, src_addr: str, dst_addr: str,
                       msg: S1apLiteMessage) -> bytes:
        return gtp.build_ipv4(src_addr, dst_addr, gtp.PROTO_SCTP,
                              s1ap.encode_message(msg))

    def _megw_of_enb(self, enb: str) -> str:
        if enb not in self.topology.enb_to_megw:
            raise StateError(f"unknown base station {enb!r}")
        return self.topology.enb_to_megw[enb]

    def run_attach(self, ue_id: str, enb: str, bearers: int = 1) -> list:
        """Initial context setup through the gateway on the S1 path."""
        ue = self._ue(ue_id)
        self._megw_of_enb(enb)
        mark = len(self.trace)
        enb_addr = self.topology.nodes[enb].addr
        sgw_addr = self.topology.nodes[self._sgw_node].addr
        ue_num = next(self._ue_ids)

        if not ue.bearers:
            for i in range(bearers):
                bid = 5 + i
                ue.bearers[bid] = Bearer(bearer_id=bid,
                                         upstream_teid=next(self._up_teids))
        request = S1apLiteMessage(
            kind=MessageKind.INITIAL_CONTEXT_SETUP_REQUEST, mme_ue_id=ue_num,
            enb_ue_id=ue_num, ue_ip=ue.addr, enb_addr=enb_addr,
            sgw_addr=sgw_addr,
            bearers=tuple(BearerItem(b.bearer_id, upstream_teid=b.upstream_teid,
                                     transport_addr=sgw_addr)
                          for b in ue.bearers.values()))
        self._send(self._sgw_node, enb_addr,
                   self._control_frame(sgw_addr, enb_addr, request),
                   note="ics-request")
        self.run_until_idle()

        for b in ue.bearers.values():
            if not b.downstream_teid:
                b.downstream_teid = next(self._down_teids)
        response = S1apLiteMessage(
            kind=MessageKind.INITIAL_CONTEXT_SETUP_RESPONSE, mme_ue_id=ue_num,
            enb_ue_id=ue_num, ue_ip=ue.addr, enb_addr=enb_addr,
            sgw_addr=sgw_addr,
            bearers=tuple(BearerItem(b.bearer_id,
                                     downstream_teid=b.downstream_teid,
                                     transport_addr=enb_addr)
                          for b in ue.bearers.values()))
        self._send(enb, sgw_addr,
                   self._control_frame(enb_addr, sgw_addr, response),
                   note="ics-response")
        self.run_until_idle()

        ue.radio_enb = enb
        ue.route_enb = enb
        return self.trace[mark:]

    def run_edge_request(self, ue_id: str, vip: str | None = None,
                         payload: bytes = b"edge-request",
                         bearer_id: int | None = None,
                         dst_port: int = 80,
                         reuse_flow: bool = False) -> list:
        """One upstream request to a VIP and whatever comes back.

        reuse_flow continues the previous connection (same source port)
        instead of opening a new one: how a connection survives handover.
        """
        ue = self._ue(ue_id)
        if ue.radio_enb is None:
            raise StateError(f"{ue_id!r} is not attached")
        vip = vip or self.topology.vips[0]
        mark = len(self.trace)
        if reuse_flow:
            if ue.last_flow is None:
                raise StateError(f"{ue_id!r} has no flow to continue")
            prev, prev_bearer = ue.last_flow
            sport, dst_port, vip = prev.src_port, prev.dst_port, prev.dst_ip
            if bearer_id is None:
                bearer_id = prev_bearer
        else:
            sport = ue.next_port
            ue.next_port += 1
        bearer = (ue.bearers[bearer_id] if bearer_id is not None
                  else next(iter(ue.bearers.values())))
        inner = gtp.build_ipv4(ue.addr, vip, 6,
                               gtp.build_tcpish(6, sport, dst_port, payload))
        flow = gtp.inner_five_tuple(inner)
        ue.last_flow = (flow, bearer.bearer_id)
        enb = ue.radio_enb
        enb_addr = self.topology.nodes[enb].addr
        sgw_addr = self.topology.nodes[self._sgw_node].addr
        frame = gtp.encode_gtpu(GtpuPacket(
            outer_src=enb_addr, outer_dst=sgw_addr, teid=bearer.upstream_teid,
            message_type=GtpMessageType.GPDU, inner=inner))
        self._record(ue.node_id, SENT, {"vip": vip, "sport": sport,
                                        "bearer_id": bearer.bearer_id})
        self._send(enb, sgw_addr, frame, note="uplink")
        self.run_until_idle()
        return self.trace[mark:]

    def inject_downstream(self, ue_id: str, payload: bytes = b"push") -> list:
        """Replay a server-to-subscriber packet for the last flow."""
        ue = self._ue(ue_id)
        if ue.last_flow is None:
            raise StateError(f"{ue_id!r} has no established flow")
        flow, _ = ue.last_flow
        mark = len(self.trace)
        serving = self._serving_megw(ue)
        state = self.megws[serving]
        dip = state.affinity.get(flow)
        src = dip if dip is not None else flow.dst_ip
        data = gtp.build_ipv4(src, ue.addr, flow.proto,
                              gtp.build_tcpish(flow.proto, flow.dst_port,
                                               flow.src_port, payload))
        dip_node = self.topology.addr_to_node.get(src)
        if dip_node is None:
            raise StateError(f"no server node owns {src}")
        self._send(dip_node, ue.addr, data, note="downstream-inject")
        self.run_until_idle()
        return self.trace[mark:]

    def _serving_megw(self, ue: UeRecord) -> str:
        source = self.topology.enb_to_megw[ue.route_enb]
        return steering.stage1_select(ue.addr,
                                      self.topology.steering_configs[source])

    def run_x2_handover(self, ue_id: str, old_enb: str, new_enb: str,
                        probe_silence: bool = True) -> list:
        """The eight-step X2 timeline, with the path-switch request cloned
        at the old gateway and the acknowledgement at the new one."""
        ue = self._ue(ue_id)
        old_megw = self._megw_of_enb(old_enb)
        new_megw = self._megw_of_enb(new_enb)
        if ue.radio_enb != old_enb:
            raise StateError(
                f"{ue_id!r} is attached to {ue.radio_enb!r}, not {old_enb!r}")
        mark = len(self.trace)
        old_addr = self.topology.nodes[old_enb].addr
        new_addr = self.topology.nodes[new_enb].addr
        sgw_addr = self.topology.nodes[self._sgw_node].addr

        # steps 1-2: radio-side request/ack over X2, invisible to the EPC
        self._record(old_enb, SENT, {"kind": "x2-handover-request",
                                     "to": new_enb})
        self._record(new_enb, SENT, {"kind": "x2-handover-ack",
                                     "to": old_enb})
        ue.radio_enb = new_enb

        # step 3: path switch request, observed by the old-side gateway
        ue_num = next(self._ue_ids)
        request = S1apLiteMessage(
            kind=MessageKind.PATH_SWITCH_REQUEST, mme_ue_id=ue_num,
            enb_ue_id=ue_num, ue_ip=ue.addr, enb_addr=new_addr,
            sgw_addr=sgw_addr,
            bearers=tuple(BearerItem(b.bearer_id,
                                     upstream_teid=b.upstream_teid)
                          for b in ue.bearers.values()))
        self._send(old_enb, sgw_addr,
                   self._control_frame(new_addr, sgw_addr, request),
                   note="path-switch-request")
        self.run_until_idle()

        # steps 5-6: end markers close the old tunnels and start the silence
        old_down = {b.bearer_id: b.downstream_teid
                    for b in ue.bearers.values()}
        for b in ue.bearers.values():
            marker = gtp.encode_gtpu(GtpuPacket(
                outer_src=sgw_addr, outer_dst=old_addr,
                teid=b.downstream_teid,
                message_type=GtpMessageType.END_MARKER))
            self._send(self._sgw_node, old_addr, marker, note="end-marker")
        self.run_until_idle()

        if probe_silence and ue.last_flow is not None:
            self.inject_downstream(ue_id, payload=b"during-silence")

        # step 8: acknowledgement with the new tunnel pairs, via the new side
        for b in ue.bearers.values():
            b.downstream_teid = next(self._down_teids)
        ack = S1apLiteMessage(
            kind=MessageKind.PATH_SWITCH_ACKNOWLEDGE, mme_ue_id=ue_num,
            enb_ue_id=ue_num, ue_ip=ue.addr, enb_addr=new_addr,
            sgw_addr=sgw_addr,
            bearers=tuple(BearerItem(b.bearer_id,
                                     upstream_teid=b.upstream_teid,
                                     downstream_teid=b.downstream_teid,
                                     transport_addr=new_addr)
                          for b in ue.bearers.values()))
        self._send(self._sgw_node, new_addr,
                   self._control_frame(sgw_addr, new_addr, ack),
                   note="path-switch-ack")
        self.run_until_idle()
        ue.route_enb = new_enb
        return self.trace[mark:]


# -- default topology and named scenarios -------------------------------------

def default_topology_config() -> dict:
    """Two-region map: r1 = {mgw-a, mgw-b}, r2 = {mgw-c}; covers all three
    handover geometries."""
    return {
        "vips": ["10.100.1.1"],
        "nodes": {
            "sgw": {"kind": "sgw_mme", "addr": "10.2.0.1"},
            "mgw-a": {"kind": "megw", "addr": "10.50.0.1"},
            "mgw-b": {"kind": "megw", "addr": "10.50.0.2"},
            "mgw-c": {"kind": "megw", "addr": "10.50.0.3"},
            "enb1": {"kind": "enb", "addr": "10.1.0.1"},
            "enb2": {"kind": "enb", "addr": "10.1.0.2"},
            "enb3": {"kind": "enb", "addr": "10.1.0.3"},
            "enb4": {"kind": "enb", "addr": "10.1.0.4"},
            "dip-a1": {"kind": "dip", "addr": "10.200.0.5", "megw": "mgw-a"},
            "dip-a2": {"kind": "dip", "addr": "10.200.0.6", "megw": "mgw-a"},
            "dip-b1": {"kind": "dip", "addr": "10.200.0.7", "megw": "mgw-b"},
            "dip-c1": {"kind": "dip", "addr": "10.200.0.8", "megw": "mgw-c"},
            "ue1": {"kind": "ue", "addr": "172.16.0.2"},
            "ue2": {"kind": "ue", "addr": "172.16.0.3"},
        },
        "enb_to_megw": {"enb1": "mgw-a", "enb2": "mgw-a",
                        "enb3": "mgw-b", "enb4": "mgw-c"},
        "megw_to_region": {"mgw-a": "r1", "mgw-b": "r1", "mgw-c": "r2"},
        "links": [
            {"a": "enb1", "b": "mgw-a"}, {"a": "enb2", "b": "mgw-a"},
            {"a": "enb3", "b": "mgw-b"}, {"a": "enb4", "b": "mgw-c"},
            {"a": "mgw-a", "b": "sgw"}, {"a": "mgw-b", "b": "sgw"},
            {"a": "mgw-c", "b": "sgw"},
            {"a": "mgw-a", "b": "mgw-b"},
            {"a": "dip-a1", "b": "mgw-a"}, {"a": "dip-a2", "b": "mgw-a"},
            {"a": "dip-b1", "b": "mgw-b"}, {"a": "dip-c1", "b": "mgw-c"},
        ],
    }


SCENARIOS = ("attach", "edge-request", "two-bearers",
             "x2-same-megw", "x2-same-region", "x2-cross-region")


def run_scenario(name: str, config: dict | None = None,
                 seed: int = 0) -> Harness:
    """Drive one named end-to-end scenario; the full trace is on the result."""
    h = Harness(build_topology(config or default_topology_config()), seed=seed)
    if name == "attach":
        h.run_attach("ue1", "enb1")
    elif name == "edge-request":
        h.run_attach("ue1", "enb1")
        h.run_edge_request("ue1")
    elif name == "two-bearers":
        h.run_attach("ue1", "enb1", bearers=2)
        h.run_edge_request("ue1", bearer_id=5)
        h.run_edge_request("ue1", bearer_id=6)
    elif name == "x2-same-megw":
        h.run_attach("ue1", "enb1")
        h.run_edge_request("ue1")
        h.run_x2_handover("ue1", "enb1", "enb2")
        h.inject_downstream("ue1", payload=b"after-step-8")
    elif name == "x2-same-region":
        h.run_attach("ue1", "enb1")
        h.run_edge_request("ue1")
        h.run_x2_handover("ue1", "enb1", "enb3")
        h.run_edge_request("ue1", reuse_flow=True)
        h.inject_downstream("ue1", payload=b"after-step-8")
    elif name == "x2-cross-region":
        h.run_attach("ue1", "enb1")
        h.run_edge_request("ue1")
        h.run_x2_handover("ue1", "enb1", "enb4")
        # after migration the application answers the resumed connection
        # from the new region
        h.run_edge_request("ue1", reuse_flow=True)
    else:
        raise StateError(f"unknown scenario {name!r}; pick from {SCENARIOS}")
    return h
