# generated by mlcforge 0.1.0 for backend reference; do not edit
"""Interface for handcrafted component `scanner`. Fill in the handlers."""


class Scanner:
    COMPONENT = "scanner"

    def __init__(self, emit):
        self._emit = emit

    def emit_page(self, value):
        """Send `value`: Q(0:255)^{28,28}."""
        self._emit("page", value)
