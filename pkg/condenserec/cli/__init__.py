from .config import PipelineConfig as PipelineConfig, load_pipeline_config as load_pipeline_config
