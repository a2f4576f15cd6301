from . import boost_schemas, instance_schemas, metrics_schemas, model_schemas, pattern_schemas
