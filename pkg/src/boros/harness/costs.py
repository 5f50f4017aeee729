"""Per-operation cost accounting: on-chain transactions, off-chain messages, signatures."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from ..core import BorosError

ON_CHAIN = "on-chain"
OFF_CHAIN = "off-chain"
ASSEMBLY = "assembly"  # a party hands its half-signed join to the counterparty
EVENT = "event"  # contract notification toward a party

OPERATIONS = {
    "open": "open",
    "update": "in-channel transfer",
    "join": "join",
    "cc-transfer": "cross-channel transfer",
    "withdraw": "withdraw",
    "close": "close",
}


class MixedOperations(BorosError):
    pass


def classify(kind: str, sender_role: str, to_role: str) -> str:
    """Cost class of one message given the roles ('party', 'contract', 'hub') at each end."""
    if sender_role == "contract":
        return EVENT
    if sender_role == "party" and to_role == "contract":
        return ON_CHAIN
    if kind == "join-req":
        return ASSEMBLY
    return OFF_CHAIN


@dataclass
class CostReport:
    operation: str
    on_chain_txs: int = 0
    off_chain_msgs: int = 0
    signatures: int = 0

    def triple(self) -> tuple[int, int, int]:
        return (self.on_chain_txs, self.off_chain_msgs, self.signatures)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["operation", "on_chain_txs", "off_chain_msgs", "signatures"])
        w.writerow([self.operation, *self.triple()])
        return buf.getvalue()


def account_costs(trace) -> CostReport:
    """Count the costs of the single operation a trace performs."""
    kinds = {OPERATIONS.get(st.kind, st.kind) for st in trace.scenario.script}
    if len(kinds) > 1 or len({st.sid for st in trace.scenario.script}) > 1:
        raise MixedOperations(f"trace mixes operations: {sorted(kinds)}")
    report = CostReport(kinds.pop() if kinds else "none")
    for rec in trace.messages():
        if rec.status == "dropped":
            continue
        if rec.cls == ON_CHAIN:
            report.on_chain_txs += 1
            report.signatures += rec.sigs
        elif rec.cls == OFF_CHAIN:
            report.off_chain_msgs += 1
            report.signatures += rec.sigs
    return report
