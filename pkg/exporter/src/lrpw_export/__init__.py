from .exporter import ExportError, NormalizationSpec, export, export_file, map_state_dict
from .format import Container, FormatError, deserialize, serialize

__version__ = "0.1.0"
