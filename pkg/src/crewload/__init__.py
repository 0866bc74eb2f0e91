"""crewload: workload-aware view allocation for human operator teams.

Subsystems: an inverted-U operator performance model (``perfmodel``), a
discrete allocation environment (``env``), allocation strategies and the
approval gate (``allocator``), a from-scratch clipped-surrogate policy
trainer (``ppo``), within-subject statistics (``stats``), benchmark
harness (``bench``), a live session engine with HTTP/WS service
(``session``), and a single CLI (``cli``).
"""

__version__ = "0.1.0"
