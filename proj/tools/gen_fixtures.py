#!/usr/bin/env python3
"""Regenerates the shipped data fixtures under data/ and tests/fixtures/.

The outputs are committed; rerun after editing this script:

    python3 tools/gen_fixtures.py --listings SOURCE.md

The stage catalog is synthetic. Stage names, descriptions and the example
bank used by the byte-exact prompt tests are taken from the two prompt
listings found in the markdown document given with --listings.
"""

import argparse
import json
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
FIXTURES = ROOT / "tests" / "fixtures"

UNBOUNDED = "unbounded"

# --------------------------------------------------------------------------
# Stage catalog

CONNECTORS = {
    # name: (display name, synonyms)
    "amazon_rds_mysql": ("Amazon RDS for MySQL", []),
    "amazon_rds_oracle": ("Amazon RDS for Oracle", []),
    "amazon_rds_postgresql": ("Amazon RDS for PostgreSQL", []),
    "amazon_redshift": ("Amazon Redshift", ["redshift"]),
    "amazon_s3": ("Amazon S3", ["s3"]),
    "apache_cassandra": ("Apache Cassandra", []),
    "apache_derby": ("Apache Derby", ["derby"]),
    "apache_hbase": ("Apache HBase", ["hbase"]),
    "apache_kudu": ("Apache Kudu", ["kudu"]),
    "azure_blob_storage": ("Azure Blob Storage", []),
    "azure_cosmos_db": ("Azure Cosmos DB", ["cosmos db"]),
    "azure_data_lake": ("Azure Data Lake Storage", []),
    "azure_databricks": ("Azure Databricks", ["databricks"]),
    "azure_file_storage": ("Azure File Storage", []),
    "azure_postgresql": ("Azure Database for PostgreSQL", []),
    "azure_sql": ("Azure SQL Database", []),
    "azure_synapse": ("Azure Synapse Analytics", ["synapse"]),
    "box": ("Box", []),
    "cassandra": ("Cassandra", []),
    "cloud_object_storage": ("IBM Cloud Object Storage", ["cos"]),
    "cloudant": ("IBM Cloudant", []),
    "cockroachdb": ("CockroachDB", []),
    "complex_flat_file": ("Complex Flat File", []),
    "couchbase": ("Couchbase", []),
    "dataset": ("Data Set", ["data set"]),
    "db2": ("IBM Db2", []),
    "db2_for_i": ("IBM Db2 for i", []),
    "db2_for_zos": ("IBM Db2 for z/OS", []),
    "db2_warehouse": ("IBM Db2 Warehouse", []),
    "dropbox": ("Dropbox", []),
    "dv": ("IBM Data Virtualization", ["data virtualization"]),
    "dvm": ("IBM Data Virtualization Manager for z/OS", ["data virtualization manager"]),
    "elasticsearch": ("Elasticsearch", []),
    "exasol": ("Exasol", []),
    "external_source": ("External Source", []),
    "external_target": ("External Target", []),
    "file_connector": ("Local File", []),
    "fileset": ("File Set", ["file set"]),
    "ftp": ("FTP", []),
    "generic_jdbc": ("Generic JDBC", ["jdbc"]),
    "generic_odbc": ("Generic ODBC", ["odbc"]),
    "generic_s3": ("Generic S3", []),
    "google_bigquery": ("Google BigQuery", ["bigquery"]),
    "google_cloud_pubsub": ("Google Cloud Pub/Sub", ["pubsub"]),
    "google_cloud_spanner": ("Google Cloud Spanner", ["spanner"]),
    "google_cloud_storage": ("Google Cloud Storage", ["gcs"]),
    "greenplum": ("Greenplum", []),
    "hdfs": ("Apache HDFS", []),
    "hive": ("Apache Hive", []),
    "http": ("HTTP", []),
    "ibm_mq": ("IBM MQ", []),
    "impala": ("Apache Impala", []),
    "informix": ("IBM Informix", []),
    "kafka": ("Apache Kafka", []),
    "looker": ("Looker", []),
    "mariadb": ("MariaDB", []),
    "microsoft_access": ("Microsoft Access", []),
    "minio": ("MinIO", []),
    "mongodb": ("MongoDB", []),
    "mysql": ("MySQL", []),
    "netezza": ("IBM Netezza Performance Server", []),
    "odata": ("OData", []),
    "oracle": ("Oracle", []),
    "planning_analytics": ("IBM Planning Analytics", []),
    "postgresql": ("PostgreSQL", ["postgres"]),
    "presto": ("Presto", []),
    "redis": ("Redis", []),
    "salesforce": ("Salesforce", []),
    "sap_ase": ("SAP ASE", []),
    "sap_bapi": ("SAP BAPI", []),
    "sap_bulk_extract": ("SAP Bulk Extract", []),
    "sap_delta_extract": ("SAP Delta Extract", []),
    "sap_hana": ("SAP HANA", []),
    "sap_idoc": ("SAP IDoc", []),
    "sap_odata": ("SAP OData", []),
    "sequential_file": ("Sequential File", []),
    "servicenow": ("ServiceNow", []),
    "sftp": ("SFTP", []),
    "sharepoint": ("Microsoft SharePoint", []),
    "singlestore": ("SingleStore", []),
    "snowflake": ("Snowflake", []),
    "sqlserver": ("Microsoft SQL Server", ["sql server", "mssql"]),
    "sybase_iq": ("SAP Sybase IQ", []),
    "tableau": ("Tableau", []),
    "teradata": ("Teradata", []),
    "vertica": ("Vertica", []),
    "watsonx_data": ("watsonx.data", []),
    "web_service": ("Web Service", []),
    "xml_input": ("XML Input", []),
    "yellowbrick": ("Yellowbrick", []),
}

# name: (description, synonyms, inputs, outputs, property list)
TRANSFORMS = {
    "aggregator": ("Groups input rows and computes summary values such as sums, counts and averages for each group.",
                   ["aggregate"], (1, 1), (1, 1), ["Grouping keys", "Aggregation type", "Output column"]),
    "bloom_filter": ("Looks up incoming keys in a bloom filter to drop rows that were seen before.",
                     [], (1, 1), (1, 1), ["Key column", "Expected size"]),
    "change_apply": ("Applies encoded change operations to a before data set based on a changed data set.",
                     [], (2, 2), (1, 1), ["Change keys", "Check value columns"]),
    "change_capture": ("Compares a before and an after data set and outputs a record for every change.",
                       [], (2, 2), (1, 1), ["Change keys", "Drop output for copy"]),
    "checksum": ("Generates a checksum value for each row from the selected columns.",
                 [], (1, 1), (1, 1), ["Checksum column", "Algorithm"]),
    "column_export": ("Exports data from several columns into a single column of string or raw type.",
                      [], (1, 1), (1, 2), ["Export column", "Schema file"]),
    "column_generator": ("Adds generated columns to the data, or produces test rows with mock values for the columns you choose.",
                         [], (0, 1), (1, 1), None),
    "column_import": ("Column Import is a stage that imports data from a single column and outputs it to one or more columns",
                      [], (1, 1), (1, 2), ["Import column", "Keep input column", "Schema file"]),
    "combine_records": ("Combines records in which particular key column values are identical into vectors of subrecords.",
                        [], (1, 1), (1, 1), ["Key column", "Subrecord name"]),
    "compare": ("Performs a column-by-column comparison of records in two presorted input data sets.",
                [], (2, 2), (1, 1), ["Abort on difference", "Warn on extra columns"]),
    "compress": ("Compresses a data set using a UNIX compression utility.",
                 [], (1, 1), (1, 1), ["Command"]),
    "copy": ("Copies a single input data set to one or more output data sets.",
             [], (1, 1), (1, UNBOUNDED), ["Force copy"]),
    "data_masking": ("Masks sensitive column values such as names or salaries before data leaves the flow.",
                     ["mask"], (1, 1), (1, 1), ["Masked column", "Masking method"]),
    "decode": ("Decodes a data set using a UNIX decoding command that you supply.",
               [], (1, 1), (1, 1), None),
    "difference": ("Performs a record-by-record comparison of two input data sets, which are different versions of the same data set.",
                   [], (2, 2), (1, 1), ["Difference keys", "All non-key columns are values"]),
    "encode": ("Encodes a data set using a UNIX encoding command, such as gzip, that you supply.",
               [], (1, 1), (1, 1), ["Command"]),
    "expand": ("Converts a previously compressed data set back into a sequence of records.",
               ["uncompress"], (1, 1), (1, 1), ["Command"]),
    "external_filter": ("Passes the input data through a UNIX command that acts as a filter.",
                        [], (1, 1), (1, 1), ["Filter command", "Arguments"]),
    "filter": ("Transfers, unmodified, the records of the input data set which satisfy requirements that you specify and filters out all other records.",
               ["extract"], (1, 1), (1, UNBOUNDED), None),
    "funnel": ("Copies multiple input data sets to a single output data set.",
               [], (1, UNBOUNDED), (1, 1), ["Funnel type", "Sort key"]),
    "generic": ("Calls an operator that you name and passes it the options you list.",
                [], (0, UNBOUNDED), (0, UNBOUNDED), ["Operator", "Options"]),
    "head": ("The Head Stage selects the first N rows from each partition of an input data set and copies the selected rows to an output data set. You can sample data using this stage",
             [], (1, 1), (0, 1), None),
    "join": ("Performs join operations on two or more data sets input to the stage and then outputs the resulting data set.",
             [], (2, UNBOUNDED), (1, 1), ["Join key", "Join type"]),
    "join_merge": ("Merges a sorted master data set with one or more sorted update data sets on key columns.",
                   ["combine"], (2, UNBOUNDED), (1, UNBOUNDED), ["Merge keys", "Unmatched masters mode"]),
    "lookup": ("Looks up data in one or more reference tables and attaches the matching values to each input row.",
               ["look up"], (2, UNBOUNDED), (1, 2), ["Lookup key", "Lookup failure"]),
    "make_subrecord": ("Combines specified vectors in an input data set into a vector of subrecords.",
                       [], (1, 1), (1, 1), ["Subrecord name", "Vector columns"]),
    "merge": ("Combines a sorted master data set with one or more sorted update data sets by key.",
              [], (2, UNBOUNDED), (1, UNBOUNDED), ["Merge keys", "Reject masters"]),
    "make_vector": ("Combines specified columns of an input data record into a vector of columns.",
                    [], (1, 1), (1, 1), ["Column prefix"]),
    "modify": ("Alters the record schema of its input data set by renaming, dropping, converting or updating columns.",
               ["update"], (1, 1), (1, 1), ["Specification"]),
    "peek": ("Prints record column values to the job log or to a separate output link as the stage copies records.",
             [], (1, 1), (0, 1), ["Rows per partition", "Peek all input columns"]),
    "pivot": ("Converts columns into rows or rows into columns in the output data.",
              ["unpivot"], (1, 1), (1, 1), ["Pivot type", "Pivot columns"]),
    "promote_subrecord": ("Promotes the columns of an input subrecord to top-level columns.",
                          [], (1, 1), (1, 1), ["Subrecord name"]),
    "remove_duplicates": ("Takes a single sorted data set as input, removes all duplicate rows, and writes the results to an output data set.",
                          ["deduplicate"], (1, 1), (1, 1), ["Key", "Duplicate to retain"]),
    "row_generator": ("Produces a set of mock data fitting the specified metadata.",
                      [], (0, 0), (1, 1), ["Number of records", "Schema file"]),
    "sample": ("Samples an input data set, either by percentage or by period, and writes the samples to output links.",
               [], (1, 1), (1, UNBOUNDED), None),
    "slowly_changing_dimension": ("Maintains a dimension table whose values change over time, keeping history rows.",
                                  ["scd"], (2, 2), (1, 2), ["Business key", "Effective date column"]),
    "sort": ("Sorts the input data set on one or more key columns.",
             [], (1, 1), (1, 1), None),
    "split_subrecord": ("The Split Subrecord stage separates an input subrecord field into a set of top-level vector columns.",
                        [], (1, 1), (1, 1), ["Subrecord column"]),
    "split_vector": ("The Split Vector operator stage modifies an input vector column by splitting it into columns",
                     [], (1, 1), (1, 1), ["Vector column"]),
    "surrogate_key_generator": ("Generates unique surrogate key values for a key column.",
                                ["surrogate key"], (0, 1), (0, 1), ["Key column", "Key source"]),
    "switch": ("Takes a single data set as input and assigns each input row to an output data set based on the value of a selector field.",
               [], (1, 1), (1, UNBOUNDED), None),
    "tail": ("The tail operator copies the last N records from each partition of its input data set to its output data set. By default, N is 10 records",
             [], (1, 1), (0, 1), None),
    "transformer": ("Applies derivations, constraints and functions to the columns of each input row.",
                    [], (1, 1), (1, UNBOUNDED), ["Derivation", "Constraint"]),
    "wave_generator": ("Inserts end-of-wave markers into the data after a given number of rows.",
                       [], (1, 1), (1, 1), ["Records per wave"]),
    "write_range_map": ("Writes a range map for the range partitioner from a sample of the input data.",
                        [], (1, 1), (0, 0), ["Range map file", "Key"]),
    "xml_output": ("Composes XML documents from the relational columns of the input data.",
                   [], (1, 1), (1, 1), ["Document root", "Output column"]),
    "data_rules": ("Checks each row against data rules and routes valid and invalid rows to separate outputs.",
                   [], (1, 1), (1, 2), ["Rule set"]),
    "address_verification": ("Validates and standardizes postal addresses in the input columns.",
                             [], (1, 1), (1, 2), ["Address columns", "Country"]),
    "hierarchical_data": ("Parses and composes hierarchical JSON or XML data inside a flow.",
                          ["json"], (0, UNBOUNDED), (0, UNBOUNDED), ["Assembly"]),
    "column_transform": ("Applies a column-level expression to one or more columns in place.",
                         [], (1, 1), (1, 1), ["Expression"]),
    "ruby": ("Runs a user-supplied script on every row and emits the script output.",
             [], (1, 1), (1, 1), ["Script"]),
    "data_quality": ("Computes data quality scores for the input columns and flags suspect rows.",
                     [], (1, 1), (1, 1), ["Quality dimensions"]),
}

GENERIC_PROPS = [
    {"name": "Combine operators", "description": "Combine underlying operators into a single process.",
     "type": "boolean", "default": "true"},
    {"name": "Execution mode", "description": "Run the stage in parallel or sequentially.",
     "type": {"enum": ["Parallel", "Sequential"]}, "default": "Parallel"},
    {"name": "Preserve partitioning", "description": "Partitioning behaviour passed to the next stage.",
     "type": {"enum": ["Clear", "Propagate", "Set"]}, "default": "Propagate"},
]

SPECIFIC_PROPS = {
    "column_generator": [
        {"name": "Options/Column Method", "description": "How the generated columns are described.",
         "type": {"enum": ["Explicit", "Schema File"]}, "default": "Explicit"},
        {"name": "Options/Column to Generate", "description": "Name of the column to generate.",
         "type": "string", "availability": "'Options/Column Method' = \"Explicit\""},
        {"name": "Options/Schema File", "description": "Schema file that describes the generated columns.",
         "type": "string", "availability": "'Options/Column Method' = \"Schema File\""},
        {"name": "Row limit", "description": "Maximum number of rows to generate.", "type": "integer"},
        {"name": "Generate Unicode Columns", "description": "Generate string columns as Unicode.",
         "type": "boolean", "default": "false"},
    ],
    "decode": [
        {"name": "Command", "description": "UNIX command used to decode the data.", "type": "string"},
        {"name": "Decimal rounding mode", "description": "Rounding applied when decimal values are decoded.",
         "type": {"enum": ["Ceiling", "Floor", "Nearest"]}, "default": "Nearest"},
    ],
    "filter": [
        {"name": "Where clause", "description": "Condition a record must satisfy to pass.", "type": "string"},
        {"name": "Output rejects", "description": "Send records that fail every clause to a reject link.",
         "type": "boolean", "default": "false"},
        {"name": "Drop column", "description": "Column removed from the output.", "type": "string"},
    ],
    "head": [
        {"name": "Rows", "description": "Number of rows to copy from each partition.", "type": "integer",
         "default": "10"},
        {"name": "All rows", "description": "Copy all rows instead of the first N.", "type": "boolean",
         "default": "false"},
        {"name": "Skip", "description": "Rows to skip at the start of each partition.", "type": "integer",
         "availability": "not ('All rows' = true)"},
        {"name": "Period", "description": "Copy every Nth row.", "type": "integer"},
    ],
    "tail": [
        {"name": "Rows", "description": "Number of records to copy from each partition.", "type": "integer",
         "default": "10"},
        {"name": "Partitions", "description": "Partitions to copy from.", "type": "string"},
    ],
    "sample": [
        {"name": "Sample mode", "description": "Sample by percentage or by period.",
         "type": {"enum": ["Percent", "Period"]}, "default": "Percent"},
        {"name": "Percent", "description": "Percentage of rows sent to each output.", "type": "decimal",
         "availability": "'Sample mode' = \"Percent\""},
        {"name": "Period", "description": "Keep every Nth row.", "type": "integer",
         "availability": "'Sample mode' = \"Period\""},
        {"name": "Seed", "description": "Seed of the random sampler.", "type": "integer"},
    ],
    "sort": [
        {"name": "Sort key", "description": "Column the rows are sorted on.", "type": "string"},
        {"name": "Sort order", "description": "Ascending or descending order.",
         "type": {"enum": ["Ascending", "Descending"]}, "default": "Ascending"},
        {"name": "Stable sort", "description": "Keep the input order of equal keys.", "type": "boolean",
         "default": "true"},
    ],
    "switch": [
        {"name": "Selector", "description": "Column whose value picks the output link.", "type": "string"},
        {"name": "If not found", "description": "What happens to rows no case matches.",
         "type": {"enum": ["Fail", "Drop", "Output"]}, "default": "Fail"},
    ],
}

CONNECTOR_PROPS = [
    {"name": "Connection name", "description": "Name of the platform connection to use.", "type": "string"},
    {"name": "Schema name", "description": "Schema that holds the table.", "type": "string"},
    {"name": "Table name", "description": "Table to read or write.", "type": "string"},
    {"name": "Write mode", "description": "How rows are written to the target.",
     "type": {"enum": ["Insert", "Update", "Upsert", "Replace"]}, "default": "Insert"},
    {"name": "Row limit", "description": "Maximum number of rows to read.", "type": "integer"},
]


def property_list(name):
    if name in SPECIFIC_PROPS:
        return SPECIFIC_PROPS[name] + GENERIC_PROPS
    desc, _, _, _, props = TRANSFORMS[name]
    out = [{"name": p, "description": f"{p} used by the stage.", "type": "string"} for p in props]
    return out + GENERIC_PROPS


def connector_description(name, display):
    if name == "dataset":
        return "A file datasource stage that reads and writes data from a DataSet/Data Set."
    if name == "dv":
        return ("A stage that integrates data sources across multiple types and locations and turns all this data "
                "into one logical data view.")
    return f"A datasource connector that reads data from and writes data to {display}."


def build_catalog():
    stages = []
    for name, (display, synonyms) in CONNECTORS.items():
        stages.append({
            "name": name,
            "description": connector_description(name, display),
            "synonyms": synonyms,
            "is_connector": True,
            "inputs": {"min": 0, "max": 1},
            "outputs": {"min": 0, "max": 1},
            "properties": CONNECTOR_PROPS,
        })
    for name, (desc, synonyms, (imin, imax), (omin, omax), _) in TRANSFORMS.items():
        stages.append({
            "name": name,
            "description": desc,
            "synonyms": synonyms,
            "is_connector": False,
            "inputs": {"min": imin, "max": imax},
            "outputs": {"min": omin, "max": omax},
            "properties": property_list(name),
        })
    stages.sort(key=lambda s: s["name"])
    assert len(stages) == 142, len(stages)
    assert sum(s["is_connector"] for s in stages) == 90
    return {"stages": stages}


def display_name(stage):
    if stage in CONNECTORS:
        return CONNECTORS[stage][0]
    return stage.replace("_", " ")


# --------------------------------------------------------------------------
# Prompt listings

LISTING_RE = re.compile(r"\\begin\{lstlisting\}\[[^\n]*\]\n(.*?)\\end\{lstlisting\}", re.S)
EXAMPLE_RE = re.compile(r'Utterance: (.*)\nOperators: "(.*)"\n')
CONTEXT_RE = re.compile(r'^"([a-z_]+)": (.*)$', re.M)


def read_listings(source):
    text = source.read_text(encoding="utf-8")
    listings = LISTING_RE.findall(text)
    if len(listings) != 2:
        raise SystemExit(f"expected 2 prompt listings in {source}, found {len(listings)}")
    return listings


def listing_context(listing):
    block = listing.split("Context:\n", 1)[1].split("\n\n", 1)[0]
    return CONTEXT_RE.findall(block)


def listing_bank(listing):
    return [{"utterance": u, "operators": [o.strip() for o in ops.split(",")]}
            for u, ops in EXAMPLE_RE.findall(listing)]


# --------------------------------------------------------------------------
# Templates

GRANITE_HEAD = ("<|start_of_role|>system<|end_of_role|>Knowledge Cutoff Date: April 2024.\n"
                "Today's Date: December 17, 2024.\n"
                "You are Granite, developed by IBM. You are a helpful AI assistant.<|end_of_text|>"
                "<|start_of_role|>user<|end_of_role|>")
GRANITE_TAIL = "<|end_of_text|><|start_of_role|>assistant<|end_of_role|>"

STAGE_BODY = ("Given the Context in the form of Operator and its descriptions, assign the correct Operator to the "
              "Utterance. Operators may occur multiple times. Only pick Operators given in the Context.\n"
              "Your response should only include the answer. Do not provide any further explanation.\n"
              "\n"
              "Context:\n"
              "{{context}}\n"
              "Here are some examples, complete the last one:\n")

DECOMPOSE_BODY = ("Split the Utterance into sub-utterances. Each sub-utterance describes exactly one operation of an "
                  "ETL flow. Copy the wording of the Utterance and keep the order.\n"
                  "Answer with one sub-utterance per line, each starting with \"- \".\n"
                  "\n"
                  "{{examples}}")

AGENT_BODY = ("Find the DataStage stages needed for the flow in the Utterance. You can ask a stage classifier about "
              "any part of the Utterance. The classifier answers with one stage name or \"no match\".\n"
              "To ask it, answer with a single line: CALL classify: <text>\n"
              "When you know all stages, answer with a single line: FINAL: \"<stage names separated by commas, in "
              "flow order>\"\n"
              "\n"
              "Utterance:\n"
              "{{utterance}}\n")

SEGMENT_BODY = ("A flow built from the Utterance uses the nodes below.\n"
                "{{nodes}}"
                "For every node, copy the part of the Utterance that describes it. Answer with one line per node in "
                "the form \"node: text\".\n"
                "\n")

EDGES_BODY = ("A flow built from the Utterance uses the nodes below, each with its allowed number of inputs and "
              "outputs and the part of the Utterance that describes it.\n"
              "{{nodes}}"
              "List the edges of the flow, one per line, in the form \"source -> target\". Use only the node "
              "names above.\n"
              "\n")

PROPS_BODY = ("Set the properties of a DataStage stage from its description. Use only the supported properties. "
              "Answer with one line per property in the form \"name = value\". Answer with nothing if the "
              "description sets no property.\n"
              "\n"
              "Example:\n"
              "Stage: head\n"
              "Description: keep the first 20 rows and skip the first 5\n"
              "Properties:\n"
              "Rows = 20\n"
              "Skip = 5\n"
              "\n"
              "Supported properties:\n"
              "{{properties}}"
              "\n")


def granite(body, tail):
    return GRANITE_HEAD + body + tail + GRANITE_TAIL


# Final lines of each granite prompt; the mock scripts match on these.
def stage_suffix(utt):
    return f"Utterance:\n{utt}\nOperators:{GRANITE_TAIL}"


def decompose_suffix(utt):
    return f"Utterance:\n{utt}\nSub-utterances:{GRANITE_TAIL}"


def segment_suffix(utt):
    return f"Utterance:\n{utt}\nSegments:{GRANITE_TAIL}"


def edges_suffix(utt):
    return f"Utterance:\n{utt}\nEdges:{GRANITE_TAIL}"


def props_suffix(stage, sub):
    return f"Stage: {stage}\nDescription: {sub}\nProperties:{GRANITE_TAIL}"


def build_templates(listings):
    granite_stage, llama_stage = (l.rstrip("\n") for l in listings)
    ctx = listing_context(granite_stage)
    # Replace the listing's per-request parts with placeholders.
    def templatize(text, final):
        head = text.split("Context:\n", 1)[0]
        intro = "Here are some examples, complete the last one:\n"
        return head + "Context:\n{{context}}\n" + intro + "{{examples}}" + final

    g_stage = templatize(granite_stage, "Utterance:\n{{utterance}}\nOperators:" + GRANITE_TAIL)
    l_stage = templatize(llama_stage, "Utterance: {{utterance}}\nOperators: ")
    assert g_stage.startswith(GRANITE_HEAD) and g_stage.endswith(GRANITE_TAIL)
    assert g_stage == granite(STAGE_BODY, "{{examples}}Utterance:\n{{utterance}}\nOperators:"), g_stage
    assert ctx, "no context block"

    files = {
        "granite": {
            "stage": g_stage,
            "decompose": granite(DECOMPOSE_BODY, "Utterance:\n{{utterance}}\nSub-utterances:"),
            "agent": GRANITE_HEAD + AGENT_BODY + GRANITE_TAIL + "{{transcript}}",
            "segment": granite(SEGMENT_BODY, "Utterance:\n{{utterance}}\nSegments:"),
            "edges": granite(EDGES_BODY, "Utterance:\n{{utterance}}\nEdges:"),
            "properties": granite(PROPS_BODY, "Stage: {{stage}}\nDescription: {{sub_utterance}}\nProperties:"),
        },
        "llama": {
            "stage": l_stage,
            "decompose": DECOMPOSE_BODY + "Utterance:\n{{utterance}}\nSub-utterances:\n",
            "agent": AGENT_BODY + "\n{{transcript}}",
            "segment": SEGMENT_BODY + "Utterance:\n{{utterance}}\nSegments:\n",
            "edges": EDGES_BODY + "Utterance:\n{{utterance}}\nEdges:\n",
            "properties": PROPS_BODY + "Stage: {{stage}}\nDescription: {{sub_utterance}}\nProperties:\n",
        },
    }
    manifest = {}
    out_dir = DATA / "templates"
    out_dir.mkdir(parents=True, exist_ok=True)
    for family, tasks in files.items():
        manifest[family] = {}
        for task, text in tasks.items():
            fname = f"{family}_{task}.txt"
            # The loader strips exactly one trailing newline.
            (out_dir / fname).write_text(text + "\n", encoding="utf-8")
            entry = {"file": fname}
            if family == "llama" and task == "stage":
                entry["preseed"] = '"'
            manifest[family][task] = entry
    write_json(out_dir / "manifest.json", manifest)
    return ctx


# --------------------------------------------------------------------------
# Example banks and classifier pairs

def action(stage, first):
    d = display_name(stage)
    if stage in CONNECTORS:
        return f"read the records from {d}" if first else f"write the result to {d}"
    phrases = {
        "aggregator": "aggregate the totals per customer",
        "filter": "filter the rows on status",
        "sort": "sort by the order date",
        "head": "keep the first 10 rows",
        "tail": "keep the last 5 records",
        "sample": "sample a tenth of the data",
        "switch": "switch on the region code",
        "join": "join on the customer key",
        "join_merge": "merge the master and update sets on the key",
        "lookup": "look up the country names",
        "modify": "modify the column types",
        "copy": "copy the stream to two outputs",
        "funnel": "funnel the inputs together",
        "peek": "peek at the values",
        "pivot": "pivot the quarter columns",
        "remove_duplicates": "remove duplicates on the id",
        "column_generator": "use column generator to add an ID column",
        "row_generator": "use the row generator to create test data",
    }
    return phrases.get(stage, f"apply the {d} stage")


def build_bank(catalog):
    names = [s["name"] for s in catalog["stages"]]
    n = len(names)
    bank = []
    for i, name in enumerate(names):
        other = names[(i + 53) % n]
        # Connectors read first when paired with a transform.
        first, second = (other, name) if other in CONNECTORS and name not in CONNECTORS else (name, other)
        utt = f"{action(first, True).capitalize()}, then {action(second, False)}."
        bank.append({"utterance": utt, "operators": [first, second]})
    mentions = {}
    for ex in bank:
        for op in ex["operators"]:
            mentions[op] = mentions.get(op, 0) + 1
    assert all(mentions[n] == 2 for n in names)
    return bank


FORBIDDEN_TRAINING_TOKENS = {"row", "limit", "should", "be", "50"}

HAND_PAIRS = [
    ("sort on the age column", "sort"),
    ("order the records by last name", "sort"),
    ("arrange the rows by date descending", "sort"),
    ("give me the last 3 rows of my input dataset", "tail"),
    ("copy the final records of each partition", "tail"),
    ("select the first ten records", "head"),
    ("take the top rows of the data", "head"),
    ("drop records that do not match the condition", "filter"),
    ("keep only the rows where the amount is positive", "filter"),
    ("decode the column with decimal rounding mode floor", "decode"),
    ("decode the gzip encoded payload", "decode"),
    ("generate unicode columns for the output", "column_generator"),
    ("create an extra column with generated values", "column_generator"),
    ("create synthetic records for testing", "row_generator"),
    ("produce mock test data from a schema", "row_generator"),
    ("merge the master table with the updates on the key", "join_merge"),
    ("combine a master dataset with update datasets", "join_merge"),
    ("change the type of a column and rename it", "modify"),
    ("update the column values of the records", "modify"),
    ("take a random percentage of the rows", "sample"),
    ("route each record to an output by a selector value", "switch"),
    ("join two inputs on the customer id", "join"),
    ("send all records to the job log for inspection", "peek"),
    ("group by region and sum the sales", "aggregator"),
    ("delete duplicate entries", "remove_duplicates"),
    ("turn the month columns into rows", "pivot"),
    ("compute a hash value for each record", "checksum"),
    ("hide the salary values", "data_masking"),
    ("find the changes between two versions of a table", "change_capture"),
    ("apply the captured changes to the table", "change_apply"),
    ("compress the records with gzip", "encode"),
    ("split the full_name field into first and last name", "split_subrecord"),
    ("split a vector column into separate columns", "split_vector"),
]


def build_training(catalog):
    pairs = list(HAND_PAIRS)
    labelled = {label for _, label in pairs}
    for s in catalog["stages"]:
        name = s["name"]
        d = display_name(name).lower()
        if name in CONNECTORS:
            pairs.append((f"read data from {d}", name))
            pairs.append((f"write the output into {d}", name))
        elif name not in labelled:
            pairs.append((f"use the {d} stage", name))
            described = s["description"].rstrip(".").lower()
            # Keep the row-limit probe free of any lexical overlap.
            if not tokens(described) & FORBIDDEN_TRAINING_TOKENS:
                pairs.append((described, name))
    for utt, _ in pairs:
        bad = tokens(utt) & FORBIDDEN_TRAINING_TOKENS
        assert not bad, (utt, bad)
    return pairs


def tokens(text):
    return set(re.findall(r"[a-z0-9]+", text.lower()))


DECOMPOSITION_EXAMPLES = [
    {"utterance": "Read the orders from Db2, sort them by date and write them to a Data Set.",
     "subs": ["Read the orders from Db2", "sort them by date", "write them to a Data Set"]},
    {"utterance": "Use Tail", "subs": ["Use Tail"]},
    {"utterance": "Join the customers and the accounts on customer id, then keep the first 10 rows.",
     "subs": ["Join the customers and the accounts on customer id", "keep the first 10 rows"]},
    {"utterance": "Filter out rows with a null email. Then peek at the result.",
     "subs": ["Filter out rows with a null email", "peek at the result"]},
]

# --------------------------------------------------------------------------
# Evaluation dataset


A1 = ("I want to use teradata where my connection name is teradata-00, schema name is TM_DS_DB_1 and table name is "
      "EMPLOYEE2. then sort on the age column. then filter out pizza column. then postgres where my connection name "
      "is tristan postconn , schema name is public and table name is demoautotest, Also do the following, Decimal "
      "rounding mode is ceiling, Generate Unicode Columns, Row limit should be 50.")

A2 = ("Extract data from MySQL and sample it using percent mode to send some data to a switch operator and the other "
      "data to a join operator. The switch stage writes some data to a fileset and outputs the rest to a sort stage "
      "that finally writes data into another fileset. The join operator merges the sampled MySQL data with data from "
      "a SQL Server source. Finally, the first few rows are selected using a head operator.")

JOIN_MERGE = ("Combine the employee_info master dataset with the employee_updates and department_changes datasets on "
              "employee_id. Once done, update the employee_records and employee_department information accordingly.")

# Each record: id, utterance, gold stages (answer order), sub-utterances for
# decomposition, segments per node, edges, and properties per node (the
# mocked answer; accepted ones become gold).
RECORDS = [
    {
        "id": "teradata-linear",
        "utterance": A1,
        "stages": ["teradata", "sort", "filter", "decode", "column_generator", "postgresql"],
        "note": "Gold keeps the sort stage the utterance asks for; the reference flow it is based on lists "
                "teradata, filter, decode, column_generator, postgresql without it.",
        "subs": ["I want to use teradata where my connection name is teradata-00, schema name is TM_DS_DB_1 and "
                 "table name is EMPLOYEE2", "then sort on the age column", "then filter out pizza column",
                 "then postgres where my connection name is tristan postconn , schema name is public and table name "
                 "is demoautotest", "Decimal rounding mode is ceiling", "Generate Unicode Columns",
                 "Row limit should be 50"],
        "segments": {
            "teradata": "connection name is teradata-00, schema name is TM_DS_DB_1 and table name is EMPLOYEE2",
            "sort": "sort on the age column",
            "filter": "filter out pizza column",
            "decode": "Decimal rounding mode is ceiling",
            "column_generator": "Generate Unicode Columns, Row limit should be 50",
            "postgresql": "postgres where my connection name is tristan postconn , schema name is public and "
                          "table name is demoautotest",
        },
        "edges": [("teradata", "sort"), ("sort", "filter"), ("filter", "decode"), ("decode", "column_generator"),
                  ("column_generator", "postgresql")],
        "properties": {
            "teradata": [("Connection name", "teradata-00"), ("Schema name", "TM_DS_DB_1"),
                         ("Table name", "EMPLOYEE2")],
            "sort": [("Sort key", "age")],
            "filter": [("Drop column", "pizza")],
            "decode": [("Decimal rounding mode", "ceiling")],
            "column_generator": [("Generate Unicode Columns", "true"), ("Row limit", "50")],
            "postgresql": [("Connection name", "tristan postconn"), ("Schema name", "public"),
                           ("Table name", "demoautotest")],
        },
    },
    {
        "id": "mysql-branching",
        "utterance": A2,
        "stages": ["mysql", "sample", "switch", "fileset", "sort", "fileset", "join", "sqlserver", "head"],
        "subs": ["Extract data from MySQL", "sample it using percent mode to send some data to a switch operator and "
                 "the other data to a join operator", "The switch stage writes some data to a fileset",
                 "outputs the rest to a sort stage", "finally writes data into another fileset",
                 "The join operator merges the sampled MySQL data with data from a SQL Server source",
                 "the first few rows are selected using a head operator"],
        "segments": {
            "mysql": "Extract data from MySQL",
            "sample": "sample it using percent mode",
            "switch": "send some data to a switch operator",
            "fileset_1": "The switch stage writes some data to a fileset",
            "sort": "outputs the rest to a sort stage",
            "fileset_2": "finally writes data into another fileset",
            "join": "The join operator merges the sampled MySQL data",
            "sqlserver": "data from a SQL Server source",
            "head": "the first few rows are selected using a head operator",
        },
        "edges": [("mysql", "sample"), ("sample", "switch"), ("sample", "join"), ("switch", "fileset_1"),
                  ("switch", "sort"), ("sort", "fileset_2"), ("sqlserver", "join"), ("join", "head")],
        "properties": {},
    },
    {"id": "use-tail", "utterance": "Use Tail", "stages": ["tail"], "subs": ["Use Tail"], "properties": {}},
    {"id": "head", "utterance": "head", "stages": ["head"], "subs": ["head"], "properties": {}},
    {
        "id": "join-merge-modify",
        "utterance": JOIN_MERGE,
        "stages": ["join_merge", "modify"],
        "subs": ["Combine the employee_info master dataset with the employee_updates and department_changes "
                 "datasets on employee_id", "update the employee_records and employee_department information "
                 "accordingly"],
        "segments": {
            "join_merge": "Combine the employee_info master dataset with the employee_updates and "
                          "department_changes datasets on employee_id",
            "modify": "update the employee_records and employee_department information accordingly",
        },
        "edges": [("join_merge", "modify")],
        "properties": {"join_merge": [("Merge keys", "employee_id")]},
    },
    {"id": "last-rows", "utterance": "Give me the last 3 rows of my input dataset", "stages": ["tail"],
     "subs": ["Give me the last 3 rows of my input dataset"], "properties": {"tail": [("Rows", "3")]}},
    {
        "id": "snowflake-dedup-s3",
        "utterance": "Read the orders table from Snowflake, remove duplicates on order id and write the result to "
                     "Amazon S3.",
        "stages": ["snowflake", "remove_duplicates", "amazon_s3"],
        "subs": ["Read the orders table from Snowflake", "remove duplicates on order id",
                 "write the result to Amazon S3"],
        "segments": {"snowflake": "Read the orders table from Snowflake",
                     "remove_duplicates": "remove duplicates on order id",
                     "amazon_s3": "write the result to Amazon S3"},
        "edges": [("snowflake", "remove_duplicates"), ("remove_duplicates", "amazon_s3")],
        "properties": {"snowflake": [("Table name", "orders")], "remove_duplicates": [("Key", "order id")]},
    },
    {"id": "sort-last-name", "utterance": "Sort the customer records by last name", "stages": ["sort"],
     "subs": ["Sort the customer records by last name"], "properties": {"sort": [("Sort key", "last name")]}},
    {
        "id": "db2-lookup-snowflake",
        "utterance": "Read customers from Db2, look up their region in a Postgres table with a lookup stage, and "
                     "load everything into Snowflake.",
        "stages": ["db2", "postgresql", "lookup", "snowflake"],
        "subs": ["Read customers from Db2", "look up their region in a Postgres table with a lookup stage",
                 "load everything into Snowflake"],
        "segments": {"db2": "Read customers from Db2", "postgresql": "a Postgres table",
                     "lookup": "look up their region in a Postgres table with a lookup stage",
                     "snowflake": "load everything into Snowflake"},
        "edges": [("db2", "lookup"), ("postgresql", "lookup"), ("lookup", "snowflake")],
        "properties": {"lookup": [("Lookup key", "region")]},
    },
    {
        "id": "aggregate-peek",
        "utterance": "Aggregate sales by region and peek at the result",
        "stages": ["aggregator", "peek"],
        "subs": ["Aggregate sales by region", "peek at the result"],
        "segments": {"aggregator": "Aggregate sales by region", "peek": "peek at the result"},
        "edges": [("aggregator", "peek")],
        "properties": {"aggregator": [("Grouping keys", "region")]},
    },
    {
        "id": "kafka-copy",
        "utterance": "Copy the rows of the Kafka topic clicks into two outputs: one goes to a Data Set, the other "
                     "to a Sequential File.",
        "stages": ["kafka", "copy", "dataset", "sequential_file"],
        "subs": ["the Kafka topic clicks", "Copy the rows into two outputs", "one goes to a Data Set",
                 "the other to a Sequential File"],
        "segments": {"kafka": "the Kafka topic clicks", "copy": "Copy the rows of the Kafka topic clicks into two "
                     "outputs", "dataset": "one goes to a Data Set", "sequential_file": "the other to a Sequential "
                     "File"},
        "edges": [("kafka", "copy"), ("copy", "dataset"), ("copy", "sequential_file")],
        "properties": {},
    },
    {
        "id": "funnel-hive",
        "utterance": "Use the funnel stage to combine the feeds from MongoDB and Cassandra, then write them to Hive.",
        "stages": ["mongodb", "cassandra", "funnel", "hive"],
        "subs": ["the feeds from MongoDB and Cassandra", "Use the funnel stage to combine the feeds",
                 "write them to Hive"],
        "segments": {"mongodb": "the feeds from MongoDB", "cassandra": "Cassandra",
                     "funnel": "Use the funnel stage to combine the feeds", "hive": "write them to Hive"},
        "edges": [("mongodb", "funnel"), ("cassandra", "funnel"), ("funnel", "hive")],
        "properties": {},
    },
    {
        "id": "row-generator-fileset",
        "utterance": "Generate mock rows with the row generator and write them to a fileset",
        "stages": ["row_generator", "fileset"],
        "subs": ["Generate mock rows with the row generator", "write them to a fileset"],
        "segments": {"row_generator": "Generate mock rows with the row generator",
                     "fileset": "write them to a fileset"},
        "edges": [("row_generator", "fileset")],
        "properties": {},
    },
    {"id": "filter-inactive", "utterance": "Filter out inactive accounts", "stages": ["filter"],
     "subs": ["Filter out inactive accounts"], "properties": {"filter": [("Where clause", "status = 'active'")]}},
    {"id": "pivot-months", "utterance": "Pivot the monthly columns into rows", "stages": ["pivot"],
     "subs": ["Pivot the monthly columns into rows"], "properties": {}},
    {
        "id": "sftp-mask-oracle",
        "utterance": "Read the employee file from SFTP, mask the salary column with the data masking stage, and "
                     "write it to Oracle.",
        "stages": ["sftp", "data_masking", "oracle"],
        "subs": ["Read the employee file from SFTP", "mask the salary column with the data masking stage",
                 "write it to Oracle"],
        "segments": {"sftp": "Read the employee file from SFTP",
                     "data_masking": "mask the salary column with the data masking stage",
                     "oracle": "write it to Oracle"},
        "edges": [("sftp", "data_masking"), ("data_masking", "oracle")],
        "properties": {"data_masking": [("Masked column", "salary")]},
    },
    {"id": "checksum", "utterance": "Compute a checksum for every record", "stages": ["checksum"],
     "subs": ["Compute a checksum for every record"], "properties": {}},
    {"id": "salesforce", "utterance": "Read from Salesforce", "stages": ["salesforce"],
     "subs": ["Read from Salesforce"], "properties": {}},
    {
        "id": "netezza-change-capture",
        "utterance": "Capture the changes between the before and after tables stored in Netezza with change capture.",
        "stages": ["netezza", "netezza", "change_capture"],
        "subs": ["the before table stored in Netezza", "the after table stored in Netezza",
                 "Capture the changes with change capture"],
        "segments": {"netezza_1": "the before and after tables stored in Netezza",
                     "netezza_2": "after tables stored in Netezza",
                     "change_capture": "Capture the changes between the before and after tables"},
        "edges": [("netezza_1", "change_capture"), ("netezza_2", "change_capture")],
        "properties": {},
    },
    {"id": "encode-gzip", "utterance": "Encode the payload column with gzip", "stages": ["encode"],
     "subs": ["Encode the payload column with gzip"], "properties": {"encode": [("Command", "gzip")]}},
]

# The record and answer used by the one-error variant of the mock scripts.
ONE_ERROR_RECORD = "join-merge-modify"
ONE_ERROR_ANSWER = ["join_merge"]

REGISTRY = {
    "kinds": {
        "connection": ["teradata-00", "tristan postconn", "snowflake-prod", "db2-crm", "postgres-ref",
                       "mysql-sales", "sqlserver-hr", "oracle-fin"],
        "schema": ["TM_DS_DB_1", "public", "SALES", "CRM", "HR", "FIN"],
        "table": ["EMPLOYEE2", "demoautotest", "orders", "customers", "regions", "employees"],
    },
}


def instance_names(stages):
    counts = {}
    for s in stages:
        counts[s] = counts.get(s, 0) + 1
    seen = {}
    out = []
    for s in stages:
        if counts[s] == 1:
            out.append(s)
        else:
            seen[s] = seen.get(s, 0) + 1
            out.append(f"{s}_{seen[s]}")
    return out


def dataset_records():
    out = []
    for r in RECORDS:
        rec = {"id": r["id"], "utterance": r["utterance"], "gold_stages": r["stages"]}
        if "edges" in r:
            rec["gold_edges"] = [f"{a} -> {b}" for a, b in r["edges"]]
        names = instance_names(r["stages"])
        props = {n: [{"name": k, "value": v} for k, v in r["properties"].get(n, [])] for n in names}
        rec["gold_properties"] = props
        if "note" in r:
            rec["note"] = r["note"]
        out.append(rec)
    return out


def script(suffix, response):
    return {"match": {"suffix": suffix}, "response": response}


def record_scripts(r, stage_answer):
    utt = r["utterance"]
    out = [
        script(decompose_suffix(utt), "".join(f"- {s}\n" for s in r["subs"])),
        script(stage_suffix(utt), '"' + ", ".join(stage_answer) + '"'),
    ]
    names = instance_names(stage_answer)
    stages = dict(zip(names, stage_answer))
    if len(names) > 1:
        segs = r["segments"]
        out.append(script(segment_suffix(utt), "".join(f"{n}: {segs[n]}\n" for n in names)))
        out.append(script(edges_suffix(utt), "".join(f"{a} -> {b}\n" for a, b in r["edges"])))
        sub_of = {n: segs[n] for n in names}
    else:
        sub_of = {names[0]: utt}
    for n in names:
        answer = "".join(f"{k} = {v}\n" for k, v in r["properties"].get(n, []))
        out.append(script(props_suffix(stages[n], sub_of[n]), answer))
    return out


def build_mocks(one_error=False):
    scripts = []
    for r in RECORDS:
        answer = ONE_ERROR_ANSWER if one_error and r["id"] == ONE_ERROR_RECORD else r["stages"]
        scripts.extend(record_scripts(r, answer))
    return scripts


def check_records(catalog):
    names = {s["name"] for s in catalog["stages"]}
    for r in RECORDS:
        for s in r["stages"]:
            assert s in names, (r["id"], s)
        inst = instance_names(r["stages"])
        if len(inst) > 1:
            assert set(r["segments"]) == set(inst), r["id"]
            norm = " ".join(r["utterance"].split()).lower()
            for span in r["segments"].values():
                assert " ".join(span.split()).lower() in norm, (r["id"], span)
        for n in r["properties"]:
            assert n in inst, (r["id"], n)


# --------------------------------------------------------------------------

def write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--listings", type=Path, required=True, help="markdown document holding the two prompt listings")
    args = ap.parse_args()

    listings = read_listings(args.listings)
    context = build_templates(listings)

    catalog = build_catalog()
    by_name = {s["name"]: s for s in catalog["stages"]}
    # The listing context descriptions must match the catalog, except the
    # placeholder the listing shows for column_generator.
    granite8 = []
    for name, desc in context:
        assert name in by_name, name
        if name != "column_generator":
            assert by_name[name]["description"] == desc, (name, by_name[name]["description"], desc)
        granite8.append(dict(by_name[name], description=desc))
    write_json(DATA / "catalog" / "stages142.json", catalog)
    write_json(DATA / "catalog" / "granite8.json", {"stages": granite8})

    bank = listing_bank(listings[0])
    assert len(bank) == 50, len(bank)
    for ex in bank:
        for op in ex["operators"]:
            assert op in by_name, op
    write_json(DATA / "fewshot" / "listing_bank.json", bank)
    write_json(DATA / "fewshot" / "bank142.json", build_bank(catalog))
    write_json(DATA / "fewshot" / "decomposition.json", DECOMPOSITION_EXAMPLES)

    pairs = build_training(catalog)
    lines = ["# label<TAB>utterance; synthetic pairs for the lexical classifier"]
    lines += [f"{label}\t{utt}" for utt, label in pairs]
    (DATA / "classifier").mkdir(parents=True, exist_ok=True)
    (DATA / "classifier" / "training.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    registry = dict(REGISTRY)
    registry["bindings"] = {
        s["name"]: {"Connection name": "connection", "Schema name": "schema", "Table name": "table"}
        for s in catalog["stages"] if s["is_connector"]
    }
    write_json(DATA / "registry" / "registry.json", registry)

    check_records(catalog)
    write_json(DATA / "datasets" / "eval20.json", dataset_records())
    write_json(DATA / "mocks" / "eval20.json", build_mocks())
    write_json(DATA / "mocks" / "eval20_one_error.json", build_mocks(one_error=True))

    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "listing_granite.txt").write_text(listings[0], encoding="utf-8")
    (FIXTURES / "listing_llama.txt").write_text(listings[1], encoding="utf-8")


if __name__ == "__main__":
    main()
