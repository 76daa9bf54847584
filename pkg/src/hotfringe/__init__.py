"""Talbot-Lau matter-wave decoherence by thermal photon emission.

Library layout:

* :mod:`hotfringe.physics` - emission law, radiative cooling, spectra
* :mod:`hotfringe.heating` - laser heating stage Monte Carlo and thermometry
* :mod:`hotfringe.interferometer` - fringe coefficients, decoherence, visibility
* :mod:`hotfringe.pipeline` - scenario runners, CSV export, configuration
* :mod:`hotfringe.service` - FastAPI wrapper around the pipeline
* :mod:`hotfringe.cli` - thin command-line client of the service
"""

__version__ = "0.1.0"
