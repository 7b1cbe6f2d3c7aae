# Django management commands package

