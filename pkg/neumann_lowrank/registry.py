"""
.. module:: registry
   :platform: Unix, Windows
   :synopsis: metaclass caching one discretization per geometry

"""
from .exception import CachedParameterMismatch, InvalidGeometry
from .log import get_logger
from .mesh import GeometrySpec

logger = get_logger(__name__)


class SingletonMetaDiscretizationRegistry(type):
    """Metaclass keeping one instance per :class:`~neumann_lowrank.mesh.GeometrySpec`."""

    __registry = {}

    @classmethod
    def remove_registry(cls, spec):
        """
        Remove item from the registry

        :param spec: geometry the instance was built for
        :return: None
        """

        cls.__registry.pop(spec, None)

    @classmethod
    def registry_exists(cls, spec):
        """
        Return True if the item is in the registry, False otherwise.

        :param spec: geometry the instance was built for
        :return: boolean
        """

        return spec in cls.__registry

    @classmethod
    def lookup(cls, spec):
        return cls.__registry.get(spec)

    @classmethod
    def clear_registry(cls):
        cls.__registry.clear()

    def __call__(cls, spec, force=False, mesh=None, **params):

        if not isinstance(spec, GeometrySpec):
            raise InvalidGeometry(f"{spec!r} is not a geometry spec.")

        if mesh is not None:
            return super().__call__(spec, mesh=mesh, **params)

        if not force and cls.registry_exists(spec):
            instance = cls.__registry[spec]
            for name, value in params.items():
                cached = getattr(instance, name, value)
                if cached != value:
                    raise CachedParameterMismatch(spec.label, name, cached, value)
            return instance

        if force:
            logger.info("%s: rebuilding cached discretization.", spec.label)

        instance = super().__call__(spec, **params)
        cls.__registry[spec] = instance
        return instance
