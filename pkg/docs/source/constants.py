prolog_replacements = """
.. |Serializer| replace:: :class:`~aweforge.serialization.serializer.Serializer`
.. |ExperimentConfig| replace:: :class:`~aweforge.pipeline.ExperimentConfig`
.. |RunManifest| replace:: :class:`~aweforge.pipeline.RunManifest`
"""
