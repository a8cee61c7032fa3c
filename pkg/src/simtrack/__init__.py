"""Joint detection and tracking on BEV centerness maps, on synthetic scenes.

Modules: ``geometry`` (poses, boxes, grid), ``scenario`` (scene generator and
ray-cast visibility), ``targets`` (hybrid-time training targets), ``losses``,
``oracle_head`` (ground-truth-driven head output), ``tracker`` (read-off
tracking), ``baselines`` (greedy and Kalman trackers), ``metrics`` (CLEAR-MOT,
AMOTA, mAVE) and ``cli``.
"""

__version__ = "0.1.0"
