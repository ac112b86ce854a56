import collections
import json
import logging
import os

from cerberus import Validator

class InvalidDocument(Exception):
    """ custom exception that is thrown when a configuration document does
    not match its schema """
    def __init__(self, message, errors=None, *args, **kwargs):
        """ InvalidDocument constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                errors : list
                    Every offending key as 'dotted.key: reason'
        """
        self.errors = list(errors or [])
        if len(self.errors) > 0:
            message = message + ': ' + '; '.join(self.errors)
        super(InvalidDocument, self).__init__(message)

class MissingDocument(Exception):
    """ custom exception that is thrown when a referenced document does not
    exist on disk """
    def __init__(self, path, *args, **kwargs):
        """ MissingDocument constructor

            Parameters
            ----------
                path : str
                    The path that could not be opened
        """
        self.path = path
        super(MissingDocument, self).__init__('document not found: %s' % path)

def flatten_errors(errors, prefix=''):
    """ flatten the nested cerberus error tree into 'dotted.key: reason'
    strings, sorted so the message is stable """
    flat = []
    for key in sorted(errors.keys(), key=str):
        name = '%s%s' % (prefix, key)
        for entry in errors[key]:
            if isinstance(entry, dict):
                flat.extend(flatten_errors(entry, name + '.'))
            else:
                flat.append('%s: %s' % (name, entry))
    return flat

class Document(object):
    """ base document class

        A document is a validated hierarchical key-value mapping read from a
        JSON file. Subclasses describe the 'contract' of the file through a
        cerberus schema and build typed records from the normalized fields.
    """

    @property
    def schema(self):
        """ the cerberus schema definition used for validation """
        raise NotImplementedError

    def __init__(self, fields, source=None):
        """ Document constructor

            Parameters
            ----------
                fields : dict
                    The parsed document
                source : str
                    The file the document was read from, or None
        """
        self.fields = fields
        self.source = source
        self.validator = Validator(self.schema)

    def validate(self):
        """ validates the document against the schema """
        return self.validator.validate(self.fields)

    def validation_errors(self):
        return flatten_errors(self.validator.errors)

    def normalized(self):
        """ validate and return the normalized document (defaults applied)

            Raises
            ------
                InvalidDocument
                    Listing every offending key
        """
        if not self.validate():
            errors = self.validation_errors()
            logging.error('invalid %s %s: %r', type(self).__name__, self.source, errors)
            raise InvalidDocument('invalid %s %s' % (type(self).__name__,
                self.source or '<memory>'), errors)
        return self.validator.document

    def to_json(self):
        return json.dumps(self.fields, sort_keys=True)

    @staticmethod
    def read_json(path):
        """ read a JSON document from disk

            Raises
            ------
                MissingDocument
                    If the path does not exist
                InvalidDocument
                    If the file is not valid JSON
        """
        if not os.path.isfile(path):
            raise MissingDocument(path)
        with open(path, 'r') as infile:
            try:
                return json.load(infile, object_pairs_hook=collections.OrderedDict)
            except ValueError as e:
                raise InvalidDocument('not a JSON document %s' % path, [str(e)])

    @classmethod
    def load(cls, path):
        """ read, validate and normalize the document at path """
        document = cls(Document.read_json(path), source=path)
        return document.normalized()
