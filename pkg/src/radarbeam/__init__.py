"""Radar-aided V2V beam tracking workbench.

Submodules: :mod:`scenario`, :mod:`comm`, :mod:`radar`, :mod:`dsp`,
:mod:`tracker`, :mod:`nn`, :mod:`models`, :mod:`data`, :mod:`evaluation`,
:mod:`benchmark` and the command-line entry point :mod:`cli`.  The package
root imports nothing heavy so the CLI can set thread limits first.
"""
__version__ = "0.1.0"
