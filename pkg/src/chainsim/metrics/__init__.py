from .audits import (Fork, LivenessFault, Overturn, SafetyViolation, audit_agreement,
                     audit_liveness, audit_safety, detect_forks, detect_orphans,
                     detect_overturns, finalization_times, head_history)
from .economics import (DivisionByZero, IdenticalProfiles, TooManyNodes, ZeroRewards,
                        fairness_measure, fairness_windows, griefing_factor, hhi, hhi_from_shares,
                        merged_config, perfect_decentralization_check, pivotality, pod)
from .performance import (NoFinalizedBlocks, linear_fit, message_complexity,
                          quadratic_fit, scalability_sweep, throughput)
from .persistence import (FALSIFIED, HEADS_CONSISTENT, HOLDS, INCONCLUSIVE, STRONG, WEAK,
                          HorizonTooShort, ReplayState, TraceProperty, persistence_check,
                          persistence_verdict, replay_states)
from .report import MetricEntry, MetricsReport
