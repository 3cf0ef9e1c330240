"""Print the default pipeline configuration in key=value form."""
import sys

from tabsense.config import PipelineConfig

if __name__ == "__main__":
    sys.stdout.write(PipelineConfig().to_text())
