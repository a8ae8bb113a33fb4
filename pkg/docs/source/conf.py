# Sphinx configuration of the aweforge docs. Build with `sphinx-build docs/source docs/build`.
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join("..", "..")))
sys.path.insert(0, os.path.abspath("."))
import constants  # noqa: E402

project = "aweforge"
author = "aweforge developers"
release = version = "0.1.0"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.viewcode",
    "sphinx_rtd_theme",
]
autosummary_generate = True
autodoc_member_order = "bysource"

master_doc = "index"
rst_prolog = constants.prolog_replacements

html_theme = "sphinx_rtd_theme"
