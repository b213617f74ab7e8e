# main/__init__.py
