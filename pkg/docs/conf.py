# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# For a full list of options see the documentation:
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

import os
import sys

import sphinx_bootstrap_theme

sys.path.insert(0, os.path.abspath(".."))

# -- Project information -----------------------------------------------------

project = "blockpd"
copyright = "2020, blockpd developers"
author = "blockpd developers"

import blockpd

# The short X.Y version
version = blockpd.__version__
# The full version, including alpha/beta/rc tags
release = blockpd.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.githubpages",
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.doctest",
    "sphinx.ext.imgmath",
    "sphinx.ext.viewcode",
    "numpydoc",
]

# Generate the API documentation when building
autosummary_generate = True
numpydoc_show_class_members = False

source_suffix = ".rst"
master_doc = "index"
language = None
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "abap"


# -- Options for HTML output -------------------------------------------------

html_theme = "bootstrap"
html_theme_path = sphinx_bootstrap_theme.get_html_theme_path()

html_theme_options = {
    "navbar_title": "blockpd",
    "navbar_site_name": "Site",
    "navbar_links": [
        ("Usage", "usage"),
        ("Problem format", "problem_schema"),
        ("API", "api"),
    ],
    "navbar_sidebarrel": False,
    "navbar_pagenav": True,
    "navbar_pagenav_name": "Page",
    "globaltoc_depth": 2,
    "globaltoc_includehidden": "true",
    "navbar_class": "navbar",
    "navbar_fixed_top": "true",
    "source_link_position": "nav",
    "bootswatch_theme": "lumen",
    "bootstrap_version": "3",
}

htmlhelp_basename = "blockpddoc"


# -- Options for LaTeX and manual page output ---------------------------------

latex_documents = [(master_doc, "blockpd.tex", "blockpd Documentation", author, "manual")]

man_pages = [(master_doc, "blockpd", "blockpd Documentation", [author], 1)]
