"""
Q_k Flow Laboratory Test Suite.

Test Organization:
    - test_config.py: Configuration tests
    - test_logging.py: Shared logger and tree-view verbose logger
    - test_symfun.py: Symmetric functions, including hypothesis properties
    - test_geometry.py: Graph grids and curvature operators
    - test_flow.py: Graph flow stepping and monitor series
    - test_supportfn.py: Support functions, mollification and support flow
    - test_oracle.py: Shrinking-ball solution
    - test_monitors.py: Monitor series and verdicts
    - test_persistence.py: CSV, snapshot and report formats
    - test_pipeline.py: Closed-body construction
    - test_experiment.py: Presets and experiment files
    - test_verify.py: Property sweeps
    - test_main.py: Command line

Acceptance-size runs carry the ``slow`` marker.
"""
