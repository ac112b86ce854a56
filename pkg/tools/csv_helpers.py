import csv
import os
import tempfile

class CommaDialect(csv.Dialect):
    """ dialect for comma separated values """
    def __init__(self):
        self.delimiter = ','
        self.quotechar = '"'
        self.escapechar = None
        self.doublequote = True
        self.skipinitialspace = True
        self.lineterminator = '\n'
        self.quoting = csv.QUOTE_MINIMAL
        csv.Dialect.__init__(self)

def format_value(value):
    """ floats as repr, which round-trips exactly and is stable across runs """
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, 'dtype'):
        return repr(float(value)) if value.dtype.kind == 'f' else str(value)
    return str(value)

def atomic_write_text(path, text):
    """ write text to path through a temporary file and a rename, so an
    interrupted run never leaves a half-written file behind """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    fd, tmp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', newline='') as tmp:
            tmp.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise

class CsvTable(object):
    """ an in-memory table written as CSV in one atomic step """

    def __init__(self, header):
        """ CsvTable constructor

            Parameters
            ----------
                header : list
                    The column names
        """
        self.header = list(header)
        self.rows = []

    def append(self, row):
        if len(row) != len(self.header):
            raise ValueError('row length %d does not equal header length %d' % (len(row), len(self.header)))
        self.rows.append([format_value(value) for value in row])

    def extend(self, rows):
        for row in rows:
            self.append(row)

    def to_text(self):
        lines = [','.join(self.header)]
        lines.extend(','.join(row) for row in self.rows)
        return '\n'.join(lines) + '\n'

    def write(self, path):
        atomic_write_text(path, self.to_text())
        return path

def read_columns(path):
    """ read a CSV with a header row into an ordered dict of float columns """
    with open(path, 'r', newline='') as infile:
        reader = csv.reader(infile, dialect=CommaDialect())
        header = [field.strip() for field in next(reader)]
        columns = [[] for _ in header]
        for row in reader:
            if not any(field.strip() for field in row):
                continue
            if len(row) != len(header):
                raise ValueError('%s: row length %d does not equal header length %d' % (path, len(row), len(header)))
            for column, field in zip(columns, row):
                column.append(float(field))
    return dict(zip(header, columns)), header
