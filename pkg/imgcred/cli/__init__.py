from . import boost, common, data, evaluate, models, patterns
