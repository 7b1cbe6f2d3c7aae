# Django management package

