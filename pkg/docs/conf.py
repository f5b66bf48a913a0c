# -*- coding: utf-8 -*-
#
# Sphinx configuration of the expfunc documentation.

import os
import sys
import sphinx_rtd_theme

sys.path.insert(0, os.path.abspath('..'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.mathjax',
    'sphinx.ext.githubpages',
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.todo',
]

autodoc_default_options = {
    'member-order': 'bysource',
    'members': None
}

autodoc_mock_imports = ['numba']

napoleon_google_docstring = True

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'expfunc'
copyright = u'2026, expfunc developers'
author = u'expfunc developers'

# The short X.Y version.
version = u''

language = None

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

pygments_style = 'sphinx'

todo_include_todos = False

# RST epilog is added to the end of every topic. Useful for replace
# directives to use across the docset.
rst_epilog = "\n.. include:: /variables.txt"

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

html_static_path = []

html_context = {
    'theme_vcs_pageview_mode': 'edit',
}

html_show_sourcelink = False
html_show_sphinx = False

htmlhelp_basename = 'expfunc'

# -- Options for LaTeX output ---------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc, 'expfunc-docs.tex', u'expfunc', author, 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'expfunc-docs', u'expfunc', [author], 1)
]

man_show_urls = True

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
    (master_doc, 'expfunc-docs', u'expfunc',
     author, 'expfunc', 'Distributions of exponential functionals of subordinators.',
     'Miscellaneous'),
]
