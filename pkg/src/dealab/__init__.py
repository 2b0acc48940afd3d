"""Simulated lifetime-testing lab for multilayer dielectric elastomer actuators.

Subsystems:

* :mod:`dealab.device`    -- parametric synthetic actuator (displacement, force,
  capacitance, degradation)
* :mod:`dealab.waveform`  -- high-voltage drive signals and switch scheduling
* :mod:`dealab.rig`       -- two-channel measurement rig state machine
* :mod:`dealab.analysis`  -- amplitude, lifetime and capacitance metrics
* :mod:`dealab.campaign`  -- staged design-of-experiments planner/executor
* :mod:`dealab.gait`      -- antagonistic leg-pair posture and force model
* :mod:`dealab.store`     -- run-directory persistence
* :mod:`dealab.service`   -- HTTP/WebSocket control surface
* :mod:`dealab.cli`       -- command-line entry points
"""

__version__ = "0.1.0"
