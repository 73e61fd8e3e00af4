"""
Assessment Logger
Journals every string assessment as JSON lines, a human-readable log and a
markdown summary of the latest state per string
"""
import json
import logging
import os
import threading
from datetime import datetime, timezone
from typing import Dict, List, Optional

from condition_assessment import State, StateAssessment, worst_case_over_window
from config.config import ASSESSMENT_LOG_DIR
from config.flashover_config import FlashoverConfig

logger = logging.getLogger(__name__)

STATE_ICONS = {
    State.OPERATIONAL: '🟢',
    State.HAZARDOUS: '🟠',
    State.EXTREMELY_HAZARDOUS: '🔴',
}


class AssessmentLogger:
    """
    Append-only assessment store. One writer at a time (lock), readers
    re-read the JSON-lines file
    """

    def __init__(self, log_dir: str = ASSESSMENT_LOG_DIR):
        self.log_dir = log_dir
        os.makedirs(log_dir, exist_ok=True)

        self.assessment_log_file = os.path.join(log_dir, "assessments.jsonl")
        self.readable_log_file = os.path.join(log_dir, "assessments_readable.txt")
        self.summary_log_file = os.path.join(log_dir, "assessment_summary.md")

        self._lock = threading.Lock()

    def load_records(self, string_id: Optional[str] = None) -> List[Dict]:
        if not os.path.exists(self.assessment_log_file):
            return []
        records = []
        with open(self.assessment_log_file, 'r') as f:
            for line in f:
                if not line.strip():
                    continue
                record = json.loads(line)
                if string_id is None or record.get('string_id') == string_id:
                    records.append(record)
        return records

    def load_assessments(self, string_id: Optional[str] = None) -> List[StateAssessment]:
        return [StateAssessment.from_record(r) for r in self.load_records(string_id)]

    def log_assessment(self, assessment: StateAssessment, provenance: Optional[Dict] = None) -> Dict:
        """Append one assessment; returns the record written"""
        record = assessment.to_record()
        if provenance:
            record['provenance'] = provenance

        with self._lock:
            with open(self.assessment_log_file, 'a') as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
            self._append_readable_log(assessment)
            self._update_summary()

        logger.info(f"Logged assessment for '{assessment.string_id}': {assessment.state.value}")
        return record

    def worst_case(self, string_id: str, window_days: float = FlashoverConfig.WORST_CASE_WINDOW_DAYS,
                   now: Optional[datetime] = None) -> StateAssessment:
        return worst_case_over_window(self.load_assessments(string_id), window_days, now)

    def _append_readable_log(self, a: StateAssessment):
        stamp = a.timestamp.isoformat() if a.timestamp else 'n/a'
        readable = f"\n{'=' * 60}\n"
        readable += f"[{stamp}] {STATE_ICONS[a.state]} {a.string_id or 'string'}: {a.state.value}\n"
        if a.pct_u50 is not None:
            readable += f"  Estimated %U50: {a.pct_u50:.2f}%  (model RMSE {a.pct_sigma_m:.2f}%)\n"
        readable += f"  U50: {a.u50_hat:.2f} kV   sigma_t: {a.sigma_total:.2f} kV "
        readable += f"(sigma {a.sigma:.2f} + sigma_m {a.sigma_m_hat:.2f})\n"
        readable += f"  r*U_ph: {a.operating_level:.2f} kV   "
        readable += f"U50-3sigma: {a.lower_3sigma:.2f} kV   U50-1.28sigma: {a.lower_1p28sigma:.2f} kV\n"
        with open(self.readable_log_file, 'a') as f:
            f.write(readable)

    def _update_summary(self):
        latest: Dict[str, Dict] = {}
        for record in self.load_records():
            latest[record.get('string_id') or 'string'] = record

        with open(self.summary_log_file, 'w') as f:
            f.write("# Insulator String Assessment Summary\n\n")
            f.write(f"**Last Updated**: {datetime.now(timezone.utc).strftime('%Y-%m-%d %H:%M:%S')} UTC\n\n")
            f.write("| String | Last assessed | State | %U50 | U50 (kV) | sigma_t (kV) |\n")
            f.write("|---|---|---|---|---|---|\n")
            for string_id in sorted(latest):
                r = latest[string_id]
                pct = f"{r['pct_u50']:.2f}" if r.get('pct_u50') is not None else '-'
                icon = STATE_ICONS[State(r['state'])]
                f.write(f"| {string_id} | {r.get('timestamp') or '-'} | {icon} {r['state']} | {pct} | "
                        f"{r['u50_hat_kv']:.2f} | {r['sigma_t_kv']:.2f} |\n")
